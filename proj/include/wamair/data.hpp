#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wamair/tensor.hpp"

namespace wama::data {

/// File access or parse failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Image I/O (binary PPM, 8-bit). Tensors are [3,H,W] with values in [0,1].

Tensor decode_ppm(const std::string& bytes);
/// Values are clamped to [0,1] and rounded to the nearest level.
std::string encode_ppm(const Tensor& img);
Tensor load_image(const std::filesystem::path& path);
void save_image(const Tensor& img, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Degradations. Inputs are [3,H,W] (or [B,3,H,W]) in [0,1].

enum class Degradation { haze, rain, noise };
std::string to_string(Degradation d);
Degradation parse_degradation(const std::string& s);

/// Smooth field in [0,1] over HxW: a random 5x5 grid, bilinearly interpolated.
std::vector<Real> smooth_field(int64_t height, int64_t width, uint64_t seed);

/// clean * t(x) + a * (1 - t(x)) with t(x) = t + (1 - t) * variation * field(x).
/// variation = 0 gives a uniform transmission t.
Tensor degrade_haze(const Tensor& clean, Real t, Real a, uint64_t seed, Real variation = 0);

/// Additive streak intensity over HxW (>= 0). round(density * H * W / 100)
/// streaks (at least one when density > 0), each a 1-px line of random length 4..12 at `angle_deg` from
/// vertical with brightness in [0.25, 0.5].
std::vector<Real> rain_layer(int64_t height, int64_t width, Real density, Real angle_deg, uint64_t seed);
/// clamp(clean + rain_layer) on every channel.
Tensor degrade_rain(const Tensor& clean, Real density, Real angle_deg, uint64_t seed);

/// clamp(clean + sigma * N(0,1)), i.i.d. per value.
Tensor degrade_noise(const Tensor& clean, Real sigma, uint64_t seed);

/// Procedural base image [3,S,S]: a smooth color field with random
/// rectangles, discs and stripes.
Tensor procedural_image(int64_t size, uint64_t seed);

// ---------------------------------------------------------------------------
// Corpus

struct CorpusSpec {
  std::string base_dir;          // PPM files; empty selects procedural images
  int64_t patch = 64;            // power of two
  int64_t patches = 256;         // total, train + val
  double val_fraction = 0.125;
  Degradation kind = Degradation::noise;
  double strength_min = 25.0 / 255.0;  // noise: sigma, haze: 1 - t, rain: density
  double strength_max = 25.0 / 255.0;
  uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  /// Sets one field from its key ("patch", "kind", ...). Throws ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Reads key=value lines; `#` starts a comment.
  static CorpusSpec from_file(const std::filesystem::path& path);
  /// key=value lines in a fixed order; from_file(to_text()) round-trips.
  std::string to_text() const;
};

enum class Split { train, val };

struct Sample {
  Tensor degraded;  // [3,P,P]
  Tensor clean;     // [3,P,P]
  Degradation kind;
  uint64_t seed;
  Split split;
  std::string source;  // image path or "procedural/<index>"
};

struct Corpus {
  CorpusSpec spec;
  std::vector<Sample> samples;
  std::vector<int64_t> train, val;  // indices into samples
  double degraded_psnr_train = 0, degraded_psnr_val = 0;

  /// Lines "path, kind, seed, split".
  std::string manifest() const;
  /// Hash over the manifest and every patch's pixels.
  uint64_t manifest_hash() const;
};

/// Deterministic given the CorpusSpec. Throws ConfigError / IoError.
Corpus build_corpus(const CorpusSpec& spec);

struct Batch {
  Tensor degraded;  // [B,3,P,P]
  Tensor clean;
  std::vector<int64_t> indices;
  std::vector<bool> flipped;
};

/// Horizontal mirror of the last axis.
Tensor flip_horizontal(const Tensor& img);

/// Training batches: each epoch is a fresh shuffle of the train split, cut
/// into ceil(n / batch) batches (the last may be short); each sample is
/// mirrored with probability 1/2, identically for both images of a pair.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, int64_t batch_size);
  int64_t batches_per_epoch() const { return per_epoch_; }
  std::vector<int64_t> order(int64_t epoch) const;
  Batch batch(int64_t epoch, int64_t index) const;
  /// The batch consumed at global training step `step` (0-based).
  Batch at_step(int64_t step) const { return batch(step / per_epoch_, step % per_epoch_); }
  std::vector<Batch> epoch(int64_t epoch) const;

 private:
  const Corpus* corpus_;
  int64_t batch_;
  int64_t per_epoch_;
};

/// Stacks the given samples into [N,3,P,P] tensors without flips.
Batch stack(const Corpus& corpus, const std::vector<int64_t>& indices);

}  // namespace wama::data
