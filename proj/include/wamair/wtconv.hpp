#pragma once

#include <array>
#include <vector>

#include "wamair/params.hpp"
#include "wamair/tensor.hpp"

namespace wama::nn {

/// Wavelet-domain depthwise convolution (WTConv) with a direct spatial path.
struct WtConvParams {
  Tensor spatial;                 // [C,1,k,k]
  std::vector<Tensor> subband;    // per level: [4C,1,k,k], channel c*4+band
  int levels = 2;

  int64_t channels() const { return spatial.dim(0); }
  int64_t kernel() const { return spatial.dim(2); }

  void visit(const std::string& prefix, const ParamVisitor& f);

  /// Subband kernels ~ N(0, 0.02^2); spatial kernel = centered delta plus the
  /// same noise.
  static WtConvParams init(int64_t channels, int levels, int64_t kernel, Rng& rng);
  static WtConvParams zeros(int64_t channels, int levels, int64_t kernel);
};

/// out = dwconv(x, spatial) + IWT-cascade of per-level subband convolutions.
/// Each level decomposes the raw LL of the previous one; reconstruction runs
/// coarsest-first, adding the reconstructed coarse signal to the filtered LL.
Tensor wtconv_apply(const Tensor& x, const WtConvParams& p);

/// Shallow feature stem: four 3x3 conv + relu layers (3 -> C, then C -> C),
/// followed by WTConv when enabled.
struct StemParams {
  std::array<ConvParams, 4> convs;
  WtConvParams wt;
  bool use_wtconv = true;

  int64_t channels() const { return convs[3].weight.dim(0); }

  void visit(const std::string& prefix, const ParamVisitor& f);

  static StemParams init(int64_t in_channels, int64_t channels, bool use_wtconv, int levels, int64_t kernel,
                         Rng& rng);
};

Tensor gmwtconvs_apply(const Tensor& img, const StemParams& p);

}  // namespace wama::nn
