#include "wamair/train.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "wamair/rng.hpp"

namespace wama::train {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string describe(const loss::LossReport& r) {
  return "spatial=" + fmt_short(r.spatial) + " frequency=" + fmt_short(r.frequency) +
         " wavelet=" + fmt_short(r.wavelet) + " total=" + fmt_short(r.total);
}

}  // namespace

NanLossError::NanLossError(int64_t step_, std::optional<loss::LossReport> last)
    : std::runtime_error("non-finite loss at step " + std::to_string(step_) +
                         (last ? "; last finite report: " + describe(*last) : "; no finite step completed")),
      step(step_),
      last_finite(last) {}

// ---------------------------------------------------------------------------
// Optimizer and schedule

double cosine_lr(int64_t step, int64_t total, double lr_max, double lr_min) {
  if (step < 0) throw ConfigError("cosine_lr: step must be >= 0");
  if (step == 0) return lr_max;
  if (step >= total) return lr_min;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_step(const std::vector<NamedParam>& params, const GradMap& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  std::string missing;
  for (const auto& p : params) {
    if (!grads.count(p.name)) missing += (missing.empty() ? "" : ", ") + p.name;
  }
  if (!missing.empty()) throw TensorError("adam_step: missing gradients for " + missing);
  for (const auto& p : params) {
    if (grads.at(p.name).shape() != p.value->shape()) {
      throw TensorError("adam_step: gradient shape " + shape_str(grads.at(p.name).shape()) + " for " + p.name +
                        " " + shape_str(p.value->shape()));
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto& p : params) {
    const Tensor& g = grads.at(p.name);
    const auto n = static_cast<size_t>(p.value->numel());
    auto m_it = state.m.find(p.name);
    auto v_it = state.v.find(p.name);
    std::vector<Real> m(n, 0), v(n, 0), w(n);
    if (m_it != state.m.end()) std::copy_n(m_it->second.ptr(), n, m.begin());
    if (v_it != state.v.end()) std::copy_n(v_it->second.ptr(), n, v.begin());
    const Real* gp = g.ptr();
    const Real* wp = p.value->ptr();
    for (size_t i = 0; i < n; ++i) {
      const double gi = gp[i];
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double mhat = mi / bc1, vhat = vi / bc2;
      w[i] = static_cast<Real>(static_cast<double>(wp[i]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    const Shape shape = p.value->shape();
    state.m[p.name] = Tensor(shape, std::move(m));
    state.v[p.name] = Tensor(shape, std::move(v));
    *p.value = Tensor(shape, std::move(w));
  }
}

double clip_grad_norm(GradMap& grads, double max_norm) {
  double sq = 0;
  for (const auto& [name, g] : grads)
    for (auto x : g.data()) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) {
      std::vector<Real> s(g.data().begin(), g.data().end());
      for (auto& x : s) x = static_cast<Real>(static_cast<double>(x) * scale);
      g = Tensor(g.shape(), std::move(s));
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": invalid value '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

const char* b2s(bool b) { return b ? "true" : "false"; }

}  // namespace

void TrainConfig::validate() const {
  net.validate();
  loss.validate();
  corpus.validate();
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (!(lr_min > 0 && lr_min <= lr_max)) throw ConfigError("learning rates must satisfy 0 < lr_min <= lr_max");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
  if (!(grad_clip >= 0)) throw ConfigError("train.grad_clip must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
    throw ConfigError("adam: betas must be in [0,1) and eps > 0");
  }
  if (corpus.patch % net.size_multiple() != 0) {
    throw ConfigError("corpus.patch " + std::to_string(corpus.patch) + " must be a multiple of " +
                      std::to_string(net.size_multiple()) + " for net.wtconv_levels=" +
                      std::to_string(net.wtconv_levels));
  }
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "seed") {
    seed = corpus.seed = parse_number<uint64_t>(key, v);
  } else if (key.rfind("corpus.", 0) == 0) {
    corpus.set(key, v);
  } else if (key == "net.channels") {
    net.channels = parse_number<int64_t>(key, v);
  } else if (key == "net.blocks") {
    net.blocks = parse_number<int64_t>(key, v);
  } else if (key == "net.wtconv_levels") {
    net.wtconv_levels = parse_number<int>(key, v);
  } else if (key == "net.wtconv_kernel") {
    net.wtconv_kernel = parse_number<int64_t>(key, v);
  } else if (key == "net.use_gmwt") {
    net.use_gmwt = parse_bool(key, v);
  } else if (key == "net.use_mcam") {
    net.use_mcam = parse_bool(key, v);
  } else if (key == "net.use_msm") {
    net.use_msm = parse_bool(key, v);
  } else if (key == "net.separate_mamba") {
    net.separate_mamba = parse_bool(key, v);
  } else if (key == "net.mamba.d_model") {
    net.mamba.d_model = parse_number<int64_t>(key, v);
  } else if (key == "net.mamba.d_state") {
    net.mamba.d_state = parse_number<int64_t>(key, v);
  } else if (key == "net.mamba.d_conv") {
    net.mamba.d_conv = parse_number<int64_t>(key, v);
  } else if (key == "net.mamba.expand") {
    net.mamba.expand = parse_number<int64_t>(key, v);
  } else if (key == "net.mamba.selective") {
    net.mamba.selective = parse_bool(key, v);
  } else if (key == "loss.theta") {
    loss.theta = static_cast<Real>(parse_number<double>(key, v));
  } else if (key == "loss.lambda") {
    loss.lambda = static_cast<Real>(parse_number<double>(key, v));
  } else if (key == "loss.use_frequency") {
    loss.use_frequency = parse_bool(key, v);
  } else if (key == "loss.use_wavelet") {
    loss.use_wavelet = parse_bool(key, v);
  } else if (key == "loss.wavelet_raw_ssim") {
    loss.wavelet_raw_ssim = parse_bool(key, v);
  } else if (key == "train.batch") {
    batch = parse_number<int64_t>(key, v);
  } else if (key == "train.steps") {
    steps = parse_number<int64_t>(key, v);
  } else if (key == "train.lr_max") {
    lr_max = parse_number<double>(key, v);
  } else if (key == "train.lr_min") {
    lr_min = parse_number<double>(key, v);
  } else if (key == "train.log_every") {
    log_every = parse_number<int64_t>(key, v);
  } else if (key == "train.grad_clip") {
    grad_clip = parse_number<double>(key, v);
  } else if (key == "train.checkpoint_every") {
    checkpoint_every = parse_number<int64_t>(key, v);
  } else if (key == "train.seed") {
    seed = parse_number<uint64_t>(key, v);
  } else if (key == "adam.beta1") {
    adam.beta1 = parse_number<double>(key, v);
  } else if (key == "adam.beta2") {
    adam.beta2 = parse_number<double>(key, v);
  } else if (key == "adam.eps") {
    adam.eps = parse_number<double>(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void TrainConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void TrainConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void TrainConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data::IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

std::string TrainConfig::to_text() const {
  std::string s;
  auto kv = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  kv("net.channels", std::to_string(net.channels));
  kv("net.blocks", std::to_string(net.blocks));
  kv("net.wtconv_levels", std::to_string(net.wtconv_levels));
  kv("net.wtconv_kernel", std::to_string(net.wtconv_kernel));
  kv("net.use_gmwt", b2s(net.use_gmwt));
  kv("net.use_mcam", b2s(net.use_mcam));
  kv("net.use_msm", b2s(net.use_msm));
  kv("net.separate_mamba", b2s(net.separate_mamba));
  kv("net.mamba.d_model", std::to_string(net.mamba.d_model));
  kv("net.mamba.d_state", std::to_string(net.mamba.d_state));
  kv("net.mamba.d_conv", std::to_string(net.mamba.d_conv));
  kv("net.mamba.expand", std::to_string(net.mamba.expand));
  kv("net.mamba.selective", b2s(net.mamba.selective));
  kv("loss.theta", fmt_double(loss.theta));
  kv("loss.lambda", fmt_double(loss.lambda));
  kv("loss.use_frequency", b2s(loss.use_frequency));
  kv("loss.use_wavelet", b2s(loss.use_wavelet));
  kv("loss.wavelet_raw_ssim", b2s(loss.wavelet_raw_ssim));
  std::istringstream corpus_lines(corpus.to_text());
  std::string line;
  while (std::getline(corpus_lines, line)) s += "corpus." + line + "\n";
  kv("train.batch", std::to_string(batch));
  kv("train.steps", std::to_string(steps));
  kv("train.lr_max", fmt_double(lr_max));
  kv("train.lr_min", fmt_double(lr_min));
  kv("train.log_every", std::to_string(log_every));
  kv("train.grad_clip", fmt_double(grad_clip));
  kv("train.checkpoint_every", std::to_string(checkpoint_every));
  kv("train.seed", std::to_string(seed));
  kv("adam.beta1", fmt_double(adam.beta1));
  kv("adam.beta2", fmt_double(adam.beta2));
  kv("adam.eps", fmt_double(adam.eps));
  return s;
}

uint64_t TrainConfig::hash() const { return fnv1a(to_text()); }

// ---------------------------------------------------------------------------
// Training

std::string format_log(const StepLog& log) {
  return "step=" + std::to_string(log.step) + " " + describe(log.report) + " lr=" + fmt_short(log.lr);
}

loss::Pyramid target_pyramid(const Tensor& clean) { return nn::image_pyramid(clean); }

TrainResult train(const TrainConfig& cfg, const data::Corpus& corpus, nn::RestorationNet& net, TrainState& state,
                  int64_t steps, const LogSink& sink) {
  cfg.validate();
  if (corpus.spec.patch % cfg.net.size_multiple() != 0) {
    throw ConfigError("corpus patch " + std::to_string(corpus.spec.patch) + " must be a multiple of " +
                      std::to_string(cfg.net.size_multiple()));
  }
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  const data::BatchStream stream(corpus, cfg.batch);
  TrainResult result;
  std::optional<loss::LossReport> last_finite;

  for (int64_t k = 0; k < steps; ++k) {
    const int64_t step = state.step + 1;
    const double lr = cosine_lr(state.step, cfg.steps, cfg.lr_max, cfg.lr_min);
    const data::Batch batch = stream.at_step(state.step);
    const loss::Pyramid targets = target_pyramid(batch.clean);

    GradMap grads;
    loss::LossReport report;
    {
      Tape tape;
      nn::RestorationNet live = watched(net, tape);
      const nn::NetOutputs out = nn::forward(live, batch.degraded);
      const loss::LossResult l = loss::mte_loss({out.full, out.half, out.quarter}, targets, cfg.loss);
      report = l.report;
      if (!std::isfinite(l.total.item())) throw NanLossError(step, last_finite);
      const Gradients g = tape.backward(l.total);
      live.visit("", [&](const std::string& name, Tensor& t) {
        if (g.has(t)) grads.emplace(name, g.of(t));
      });
    }
    if (cfg.grad_clip > 0) clip_grad_norm(grads, cfg.grad_clip);
    adam_step(param_refs(net), grads, state.adam, lr, cfg.adam);
    state.step = step;
    last_finite = report;

    if (!result.first) result.first = report;
    result.last = report;
    if (step == 1 || step % cfg.log_every == 0 || k == steps - 1) {
      const StepLog entry{step, report, lr};
      result.logs.push_back(entry);
      if (sink) sink(entry);
    }
  }
  return result;
}

EvalResult evaluate_pairs(const Tensor& preds, const Tensor& targets) {
  if (preds.shape() != targets.shape() || preds.ndim() != 4) {
    throw TensorError("evaluate: expected matching [N,C,H,W] tensors, got " + shape_str(preds.shape()) + " and " +
                      shape_str(targets.shape()));
  }
  const int64_t N = preds.dim(0), per = preds.numel() / N;
  const Shape one{1, preds.dim(1), preds.dim(2), preds.dim(3)};
  loss::SsimOptions opt;
  opt.window = loss::fitted_window(preds.dim(2), preds.dim(3));
  EvalResult r;
  r.n = N;
  for (int64_t i = 0; i < N; ++i) {
    const Tensor p = loss::clamp01(Tensor(one, std::vector<Real>(preds.ptr() + i * per, preds.ptr() + (i + 1) * per)));
    const Tensor t(one, std::vector<Real>(targets.ptr() + i * per, targets.ptr() + (i + 1) * per));
    r.psnr += loss::psnr(p, t);
    r.ssim += static_cast<double>(loss::ssim(p, t, opt).item());
  }
  if (N > 0) {
    r.psnr /= static_cast<double>(N);
    r.ssim /= static_cast<double>(N);
  }
  return r;
}

namespace {

const std::vector<int64_t>& split_indices(const data::Corpus& corpus, data::Split split) {
  return split == data::Split::train ? corpus.train : corpus.val;
}

EvalResult merge(const EvalResult& acc, const EvalResult& part) {
  EvalResult r;
  r.n = acc.n + part.n;
  if (r.n == 0) return r;
  const double wa = static_cast<double>(acc.n) / static_cast<double>(r.n);
  const double wb = static_cast<double>(part.n) / static_cast<double>(r.n);
  r.psnr = (acc.n ? wa * acc.psnr : 0) + (part.n ? wb * part.psnr : 0);
  r.ssim = (acc.n ? wa * acc.ssim : 0) + (part.n ? wb * part.ssim : 0);
  return r;
}

}  // namespace

EvalResult evaluate(const nn::RestorationNet& net, const data::Corpus& corpus, data::Split split, int64_t batch) {
  const auto& idx = split_indices(corpus, split);
  if (idx.empty()) throw ConfigError("evaluate: split is empty");
  if (batch < 1) throw ConfigError("evaluate: batch must be >= 1");
  EvalResult acc;
  for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch)) {
    const size_t end = std::min(idx.size(), start + static_cast<size_t>(batch));
    const data::Batch b = data::stack(corpus, std::vector<int64_t>(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                                                   idx.begin() + static_cast<std::ptrdiff_t>(end)));
    acc = merge(acc, evaluate_pairs(nn::forward(net, b.degraded).full, b.clean));
  }
  return acc;
}

EvalResult evaluate_degraded(const data::Corpus& corpus, data::Split split) {
  const auto& idx = split_indices(corpus, split);
  if (idx.empty()) throw ConfigError("evaluate: split is empty");
  const data::Batch b = data::stack(corpus, idx);
  return evaluate_pairs(b.degraded, b.clean);
}

std::string format_eval(const EvalResult& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "psnr=%.6f ssim=%.6f n=%lld", r.psnr, r.ssim, static_cast<long long>(r.n));
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'W', 'A', 'M', 'A'};
constexpr uint8_t kDtypeF64 = 1, kDtypeF32 = 2;
constexpr uint8_t kNativeDtype = sizeof(Real) == 8 ? kDtypeF64 : kDtypeF32;

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) { put(v, 4); }
  void u64(uint64_t v) { put(v, 8); }
  void bytes(const std::string& s) { buf_ += s; }
  void pad8() {
    while (buf_.size() % 8 != 0) buf_.push_back('\0');
  }
  void real(Real v) {
    if constexpr (sizeof(Real) == 8) {
      u64(std::bit_cast<uint64_t>(static_cast<double>(v)));
    } else {
      u32(std::bit_cast<uint32_t>(static_cast<float>(v)));
    }
  }
  size_t size() const { return buf_.size(); }
  std::string& str() { return buf_; }

 private:
  void put(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& s, size_t end) : s_(s), end_(end) {}
  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t u32() { return static_cast<uint32_t>(get(4)); }
  uint64_t u64() { return get(8); }
  std::string bytes(size_t n) { return std::string(take(n), n); }
  size_t pos() const { return pos_; }
  void seek(size_t p) {
    if (p > end_) throw CheckpointError("checkpoint: offset beyond end of file");
    pos_ = p;
  }

 private:
  const char* take(size_t n) {
    if (n > end_ - pos_) throw CheckpointError("checkpoint: truncated file");
    const char* p = s_.data() + pos_;
    pos_ += n;
    return p;
  }
  uint64_t get(int n) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(static_cast<size_t>(n)));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
  }
  const std::string& s_;
  size_t end_;
  size_t pos_ = 0;
};

struct Entry {
  std::string name;
  Tensor value;
};

std::vector<Entry> checkpoint_entries(const nn::RestorationNet& net, const TrainState& state) {
  std::vector<Entry> out;
  nn::RestorationNet copy = net;
  copy.visit("", [&](const std::string& name, Tensor& t) { out.push_back({"param/" + name, t}); });
  for (const auto& [name, t] : state.adam.m) out.push_back({"adam.m/" + name, t});
  for (const auto& [name, t] : state.adam.v) out.push_back({"adam.v/" + name, t});
  return out;
}

}  // namespace

std::string serialize_checkpoint(const TrainConfig& cfg, const nn::RestorationNet& net, const TrainState& state) {
  const auto entries = checkpoint_entries(net, state);
  const std::string config = cfg.to_text();

  // Payload offsets are relative to the payload start, each 8-byte aligned.
  std::vector<uint64_t> offsets;
  uint64_t off = 0;
  for (const auto& e : entries) {
    offsets.push_back(off);
    off += static_cast<uint64_t>(e.value.numel()) * sizeof(Real);
    off = (off + 7) / 8 * 8;
  }

  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u64(static_cast<uint64_t>(state.step));
  w.u64(static_cast<uint64_t>(state.adam.t));
  w.u64(config.size());
  w.bytes(config);
  w.u32(static_cast<uint32_t>(entries.size()));
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    w.u32(static_cast<uint32_t>(e.name.size()));
    w.bytes(e.name);
    w.u32(static_cast<uint32_t>(e.value.ndim()));
    for (auto d : e.value.shape()) w.u64(static_cast<uint64_t>(d));
    w.u8(kNativeDtype);
    w.u64(offsets[i]);
  }
  w.pad8();
  const size_t payload_start = w.size();
  for (size_t i = 0; i < entries.size(); ++i) {
    while (w.size() - payload_start < offsets[i]) w.u8(0);
    for (auto v : entries[i].value.data()) w.real(v);
  }
  w.pad8();
  const uint64_t checksum = fnv1a(w.str().data() + payload_start, w.size() - payload_start);
  w.u64(checksum);
  return std::move(w.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic (not a WAMA checkpoint)");
  }
  if (bytes.size() < 16) throw CheckpointError("checkpoint: truncated file");
  Reader r(bytes, bytes.size() - 8);
  r.bytes(4);
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.state.step = static_cast<int64_t>(r.u64());
  ck.state.adam.t = static_cast<int64_t>(r.u64());
  const uint64_t config_len = r.u64();
  if (config_len > bytes.size()) throw CheckpointError("checkpoint: truncated file");
  const std::string config = r.bytes(config_len);
  try {
    ck.cfg.apply_text(config, "checkpoint config");
    ck.cfg.net.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: invalid config echo: ") + e.what());
  }

  struct Meta {
    std::string name;
    Shape shape;
    uint8_t dtype;
    uint64_t offset;
  };
  const uint32_t count = r.u32();
  if (count > bytes.size()) throw CheckpointError("checkpoint: bad tensor count");
  std::vector<Meta> metas(count);
  for (auto& m : metas) {
    m.name = r.bytes(r.u32());
    const uint32_t ndim = r.u32();
    if (ndim > 8) throw CheckpointError("checkpoint: bad tensor rank for " + m.name);
    for (uint32_t d = 0; d < ndim; ++d) m.shape.push_back(static_cast<int64_t>(r.u64()));
    m.dtype = r.u8();
    m.offset = r.u64();
    if (m.dtype != kDtypeF64 && m.dtype != kDtypeF32) {
      throw CheckpointError("checkpoint: unknown dtype " + std::to_string(m.dtype) + " for " + m.name);
    }
  }
  const size_t payload_start = (r.pos() + 7) / 8 * 8;
  const size_t payload_end = bytes.size() - 8;
  if (payload_start > payload_end) throw CheckpointError("checkpoint: truncated file");
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[payload_end + static_cast<size_t>(i)])) << (8 * i);
  }
  if (fnv1a(bytes.data() + payload_start, payload_end - payload_start) != stored) {
    throw CheckpointError("checkpoint: payload checksum mismatch (file corrupted)");
  }

  ck.net = nn::build(ck.cfg.net, ck.cfg.seed);
  std::map<std::string, Tensor*> params;
  for (auto& p : param_refs(ck.net)) params[p.name] = p.value;
  std::map<std::string, bool> seen;

  for (const auto& m : metas) {
    const int64_t n = shape_numel(m.shape);
    const size_t width = m.dtype == kDtypeF64 ? 8 : 4;
    if (m.offset % 8 != 0) throw CheckpointError("checkpoint: misaligned offset for " + m.name);
    if (m.offset > payload_end - payload_start ||
        static_cast<uint64_t>(n) * width > payload_end - payload_start - m.offset) {
      throw CheckpointError("checkpoint: tensor " + m.name + " exceeds payload");
    }
    Reader pr(bytes, payload_end);
    pr.seek(payload_start + m.offset);
    std::vector<Real> vals(static_cast<size_t>(n));
    for (auto& v : vals) {
      v = m.dtype == kDtypeF64 ? static_cast<Real>(std::bit_cast<double>(pr.u64()))
                               : static_cast<Real>(std::bit_cast<float>(pr.u32()));
    }
    Tensor t(m.shape, std::move(vals));

    const auto slash = m.name.find('/');
    const std::string kind = slash == std::string::npos ? "" : m.name.substr(0, slash);
    const std::string name = slash == std::string::npos ? "" : m.name.substr(slash + 1);
    if (!params.count(name) || (kind != "param" && kind != "adam.m" && kind != "adam.v")) {
      throw CheckpointError("checkpoint: unknown tensor name '" + m.name + "'");
    }
    if (params[name]->shape() != m.shape) {
      throw CheckpointError("checkpoint: shape " + shape_str(m.shape) + " for " + m.name + " does not match " +
                            shape_str(params[name]->shape()));
    }
    if (seen[m.name]) throw CheckpointError("checkpoint: duplicate tensor '" + m.name + "'");
    seen[m.name] = true;
    if (kind == "param") {
      *params[name] = std::move(t);
    } else if (kind == "adam.m") {
      ck.state.adam.m[name] = std::move(t);
    } else {
      ck.state.adam.v[name] = std::move(t);
    }
  }
  for (const auto& [name, ptr] : params) {
    if (!seen["param/" + name]) throw CheckpointError("checkpoint: missing tensor 'param/" + name + "'");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const nn::RestorationNet& net,
                     const TrainState& state) {
  const std::string bytes = serialize_checkpoint(cfg, net, state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data::IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace wama::train
