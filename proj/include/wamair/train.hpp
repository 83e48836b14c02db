#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wamair/data.hpp"
#include "wamair/net.hpp"
#include "wamair/objective.hpp"

namespace wama::train {

/// Non-finite training loss. Carries the failing step (1-based) and the last
/// finite report, if any step completed.
class NanLossError : public std::runtime_error {
 public:
  NanLossError(int64_t step, std::optional<loss::LossReport> last_finite);
  int64_t step;
  std::optional<loss::LossReport> last_finite;
};

/// Malformed, corrupted or incompatible checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Optimizer and schedule

/// lr_min + (lr_max - lr_min) (1 + cos(pi step / total)) / 2. Steps past
/// `total` give lr_min; step 0 gives lr_max and step total gives lr_min exactly.
double cosine_lr(int64_t step, int64_t total, double lr_max = 1e-4, double lr_min = 1e-6);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  int64_t t = 0;                   // completed updates
  std::map<std::string, Tensor> m;  // first moments by parameter name
  std::map<std::string, Tensor> v;  // second moments
};

struct NamedParam {
  std::string name;
  Tensor* value;
};
using GradMap = std::map<std::string, Tensor>;

/// References to every parameter tensor of `p`, in visit order.
template <class P>
std::vector<NamedParam> param_refs(P& p) {
  std::vector<NamedParam> out;
  p.visit("", [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

/// One Adam update. Each parameter is replaced by a fresh tensor, so copies
/// of the model made earlier are unaffected. Throws TensorError naming every
/// parameter without a gradient.
void adam_step(const std::vector<NamedParam>& params, const GradMap& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
double clip_grad_norm(GradMap& grads, double max_norm);

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  nn::NetConfig net;
  loss::LossWeights loss;
  data::CorpusSpec corpus;
  AdamConfig adam;
  int64_t batch = 8;
  int64_t steps = 2000;      // schedule length
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  int64_t log_every = 10;
  double grad_clip = 0;      // global L2 norm; 0 disables
  int64_t checkpoint_every = 0;  // CLI only; 0 writes the final checkpoint only
  uint64_t seed = 0;         // network initialization

  /// Throws ConfigError, including when the patch size is not a multiple of
  /// the network's size requirement.
  void validate() const;

  /// Sets one dotted key ("net.channels", "loss.theta", "train.steps",
  /// "corpus.kind", ...). Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value".
  void apply_override(const std::string& assignment);
  /// Applies key=value lines; `#` starts a comment.
  void apply_text(const std::string& text, const std::string& origin = "<config>");
  void apply_file(const std::filesystem::path& path);
  /// Every key in a fixed order; apply_text(to_text()) reproduces the config.
  std::string to_text() const;
  /// FNV-1a of to_text().
  uint64_t hash() const;
};

// ---------------------------------------------------------------------------
// Training

struct TrainState {
  int64_t step = 0;  // completed steps
  AdamState adam;
};

struct StepLog {
  int64_t step;  // 1-based
  loss::LossReport report;
  double lr;
};

/// "step=<n> spatial=<f> frequency=<f> wavelet=<f> total=<f> lr=<f>"
std::string format_log(const StepLog& log);

using LogSink = std::function<void(const StepLog&)>;

struct TrainResult {
  std::vector<StepLog> logs;  // step 1, every log_every steps, and the last step
  std::optional<loss::LossReport> first;
  std::optional<loss::LossReport> last;
};

/// Targets for the three heads: the clean image and its bilinear halvings.
loss::Pyramid target_pyramid(const Tensor& clean);

/// Runs `steps` more steps from `state`. The batch at each step is fixed by
/// the corpus and the step counter, so resuming continues the same sequence.
/// Throws NanLossError on a non-finite loss, leaving net and state at the
/// last completed step.
TrainResult train(const TrainConfig& cfg, const data::Corpus& corpus, nn::RestorationNet& net, TrainState& state,
                  int64_t steps, const LogSink& sink = {});

struct EvalResult {
  double psnr = 0;  // mean over samples; +inf when every prediction is exact
  double ssim = 0;
  int64_t n = 0;
};

/// Mean PSNR/SSIM of clamped predictions against targets, per sample. x, y: [N,3,H,W].
EvalResult evaluate_pairs(const Tensor& preds, const Tensor& targets);

/// Metrics of the full-resolution head on one split.
EvalResult evaluate(const nn::RestorationNet& net, const data::Corpus& corpus, data::Split split,
                    int64_t batch = 8);
/// Metrics of the degraded inputs themselves on one split.
EvalResult evaluate_degraded(const data::Corpus& corpus, data::Split split);

/// "psnr=<f> ssim=<f> n=<int>"
std::string format_eval(const EvalResult& r);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig cfg;
  nn::RestorationNet net;
  TrainState state;
};

/// Layout (little-endian): "WAMA", u32 version, u64 step, u64 adam_t,
/// u64 config length + config text, u32 tensor count, then per tensor
/// {u32 name length, name, u32 ndim, i64 dims, u8 dtype (1 = f64, 2 = f32),
/// u64 payload offset}, zero padding to 8 bytes, the payload (each tensor at
/// an 8-byte aligned offset), and a trailing u64 FNV-1a of the payload.
std::string serialize_checkpoint(const TrainConfig& cfg, const nn::RestorationNet& net, const TrainState& state);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const nn::RestorationNet& net,
                     const TrainState& state);
/// Throws data::IoError when unreadable, CheckpointError when invalid.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wama::train
