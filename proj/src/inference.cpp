#include "wamair/inference.hpp"

#include <algorithm>
#include <cmath>

#include "wamair/objective.hpp"
#include "wamair/wavelet.hpp"

namespace wama::infer {

namespace {

Tensor as_batch(const Tensor& img) {
  if (img.ndim() == 3 && img.dim(0) == 3) return img.reshaped_detached({1, 3, img.dim(1), img.dim(2)});
  if (img.ndim() == 4 && img.dim(0) == 1 && img.dim(1) == 3) return img;
  throw TensorError("expected an image [3,H,W] or [1,3,H,W], got " + shape_str(img.shape()));
}

Tensor pad_edge(const Tensor& x, int64_t H2, int64_t W2) {
  const int64_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<Real> v(static_cast<size_t>(C * H2 * W2));
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < H2; ++i)
      for (int64_t j = 0; j < W2; ++j)
        v[static_cast<size_t>((c * H2 + i) * W2 + j)] = x.ptr()[(c * H + std::min(i, H - 1)) * W + std::min(j, W - 1)];
  return Tensor({1, C, H2, W2}, std::move(v));
}

Tensor crop(const Tensor& x, int64_t H, int64_t W) {
  const int64_t C = x.dim(1), H2 = x.dim(2), W2 = x.dim(3);
  std::vector<Real> v(static_cast<size_t>(C * H * W));
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < H; ++i)
      std::copy_n(x.ptr() + (c * H2 + i) * W2, W, v.begin() + (c * H + i) * W);
  return Tensor({C, H, W}, std::move(v));
}

}  // namespace

Tensor restore_image(const nn::RestorationNet& net, const Tensor& img) {
  const Tensor x = as_batch(img);
  const int64_t H = x.dim(2), W = x.dim(3), m = net.cfg.size_multiple();
  const int64_t H2 = (H + m - 1) / m * m, W2 = (W + m - 1) / m * m;
  const Tensor in = (H2 == H && W2 == W) ? x : pad_edge(x, H2, W2);
  return loss::clamp01(crop(nn::forward(net, in).full, H, W));
}

std::array<Tensor, 4> subband_images(const Tensor& img, int level) {
  if (level < 1) throw ConfigError("inspect: level must be >= 1");
  const Tensor x = as_batch(img);
  const int64_t f = int64_t{1} << level;
  if (x.dim(2) % f != 0 || x.dim(3) % f != 0) {
    throw TensorError("inspect: image " + shape_str(img.shape()) + " is not divisible by 2^" + std::to_string(level));
  }
  const auto levels = wavelet::dwt2_multi(x, level);
  const wavelet::SubbandSet& s = levels.back();
  const Real scale = static_cast<Real>(f);
  std::array<Tensor, 4> out;
  for (int b = 0; b < 4; ++b) {
    const Tensor& band = s.band(static_cast<wavelet::Band>(b));
    std::vector<Real> v(band.data().begin(), band.data().end());
    if (b == 0) {
      for (auto& e : v) e /= scale;
    } else {
      Real peak = 0;
      for (auto e : v) peak = std::max(peak, std::abs(e));
      for (auto& e : v) e = peak > 0 ? Real(0.5) + Real(0.5) * e / peak : Real(0.5);
    }
    out[static_cast<size_t>(b)] = Tensor({3, band.dim(2), band.dim(3)}, std::move(v));
  }
  return out;
}

}  // namespace wama::infer
