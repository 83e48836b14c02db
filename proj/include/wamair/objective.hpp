#pragma once

#include <array>
#include <limits>

#include "wamair/tensor.hpp"

namespace wama::loss {

/// Predictions or targets at full, half and quarter resolution.
using Pyramid = std::array<Tensor, 3>;

struct LossWeights {
  Real theta = Real(0.1);   // frequency term
  Real lambda = Real(0.05); // wavelet term
  bool use_frequency = true;
  bool use_wavelet = true;
  /// Sum raw SSIM values instead of 1 - SSIM in the wavelet term.
  bool wavelet_raw_ssim = false;

  void validate() const;
};

struct LossReport {
  Real spatial = 0, frequency = 0, wavelet = 0, total = 0;
  std::array<Real, 3> spatial_by_scale{}, frequency_by_scale{}, wavelet_by_scale{};
};

/// Differentiable total plus its breakdown.
struct LossResult {
  Tensor total;
  LossReport report;
};

/// sum_i mean(|pred_i - target_i|)
Tensor spatial_loss(const Pyramid& preds, const Pyramid& targets, std::array<Real, 3>* by_scale = nullptr);
/// sum_i mean(|[Re F(pred_i), Im F(pred_i)] - [Re F(target_i), Im F(target_i)]|)
Tensor frequency_loss(const Pyramid& preds, const Pyramid& targets, std::array<Real, 3>* by_scale = nullptr);
/// sum_i sum_b (1 - ssim(W_b(pred_i), W_b(target_i))), b over the Haar subbands.
Tensor wavelet_loss(const Pyramid& preds, const Pyramid& targets, bool raw_ssim = false,
                    std::array<Real, 3>* by_scale = nullptr);

LossResult mte_loss(const Pyramid& preds, const Pyramid& targets, const LossWeights& w = {});

struct SsimOptions {
  int64_t window = 11;
  Real sigma = Real(1.5);
  Real k1 = Real(0.01);
  Real k2 = Real(0.03);
  Real data_range = Real(1);
};

/// Mean SSIM over all channels and valid window positions (no padding) with a
/// separable Gaussian window. x, y: [B,C,H,W]. Differentiable in both inputs.
Tensor ssim(const Tensor& x, const Tensor& y, const SsimOptions& opt = {});

/// Window used by the wavelet term: 11 when the subband fits, otherwise the
/// largest odd size that does (sigma unchanged, window renormalized).
int64_t fitted_window(int64_t height, int64_t width);

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();
/// 10 log10(peak^2 / MSE); +infinity when MSE is zero.
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);

/// Values clamped to [0,1] (no autodiff); metrics are computed on clamped images.
Tensor clamp01(const Tensor& x);

}  // namespace wama::loss
