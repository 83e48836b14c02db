#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wamair/params.hpp"
#include "wamair/ssm.hpp"
#include "wamair/wtconv.hpp"

namespace wama::nn {

using wama::ConfigError;

struct NetConfig {
  int64_t channels = 8;      // base width C; stages use C, 2C, 4C
  int64_t blocks = 1;        // residual units per CNN block (n)
  int wtconv_levels = 2;
  int64_t wtconv_kernel = 5;
  bool use_gmwt = true;      // WTConv at the end of each input stem
  bool use_mcam = true;
  bool use_msm = true;       // multiscale stand-in at the end of each CNN block
  bool separate_mamba = false;
  MambaConfig mamba;

  /// Throws ConfigError on invalid values.
  void validate() const;
  /// Spatial dims of the input must be a multiple of this.
  int64_t size_multiple() const { return int64_t{4} << wtconv_levels; }
};

struct ResUnitParams {
  ConvParams first, second;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Multiscale stand-in: depthwise 3x3 convs with dilation 1, 2 and 3, summed,
/// fused by a 1x1 conv and added back to the input.
struct MsmParams {
  std::array<ConvParams, 3> dilated;
  ConvParams fuse;
  void visit(const std::string& prefix, const ParamVisitor& f);
  static MsmParams init(int64_t channels, Rng& rng);
};

Tensor msm_standin(const Tensor& x, const MsmParams& p);

/// n residual units, then MCAM, then the multiscale stand-in (each optional).
struct CnnBlockParams {
  std::vector<ResUnitParams> units;
  McamParams mcam;
  MsmParams msm;
  bool use_mcam = true;
  bool use_msm = true;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

Tensor cnn_block(const Tensor& x, const CnnBlockParams& p);

struct RestorationNet {
  NetConfig cfg;
  std::array<StemParams, 3> stems;        // full, half, quarter resolution
  std::array<CnnBlockParams, 3> encoder;  // widths C, 2C, 4C
  std::array<CnnBlockParams, 3> decoder;  // indexed by scale like the encoder
  std::array<ConvParams, 2> down;         // strided 3x3: C->2C, 2C->4C
  std::array<ConvParams, 2> join;         // after stem concat: 4C->2C, 8C->4C
  std::array<ConvParams, 2> up;           // after bilinear up2: 2C->C, 4C->2C
  std::array<ConvParams, 2> skip_fuse;    // after skip concat: 2C->C, 4C->2C
  std::array<ConvParams, 3> heads;        // width -> 3, zero-initialized

  void visit(const std::string& prefix, const ParamVisitor& f);
};

/// Deterministic initialization from `seed`.
RestorationNet build(const NetConfig& cfg, uint64_t seed);

struct NetOutputs {
  Tensor full, half, quarter;
};

/// Image pyramid used for image-level skips and training targets:
/// level 0 is `img`, each next level is a down2_bilinear of the previous.
std::array<Tensor, 3> image_pyramid(const Tensor& img);

NetOutputs forward(const RestorationNet& net, const Tensor& img);

int64_t parameter_count(const RestorationNet& net);

struct ManifestEntry {
  std::string name;
  Shape shape;
};
std::vector<ManifestEntry> manifest(const RestorationNet& net);

/// Multiply-accumulates of conv/linear layers for one forward pass at HxW,
/// batch 1. Reporting only.
int64_t estimate_macs(const RestorationNet& net, int64_t height, int64_t width);

}  // namespace wama::nn
