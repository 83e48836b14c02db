#include "wamair/objective.hpp"

#include <algorithm>
#include <cmath>

#include "wamair/ops.hpp"
#include "wamair/wavelet.hpp"

namespace wama::loss {

void LossWeights::validate() const {
  if (!(theta >= 0) || !(lambda >= 0)) throw ConfigError("loss weights must be >= 0");
}

namespace {

void check_pair(const Tensor& p, const Tensor& t, const char* what) {
  if (p.shape() != t.shape()) {
    throw TensorError(std::string(what) + ": prediction " + shape_str(p.shape()) + " vs target " +
                      shape_str(t.shape()));
  }
}

Tensor accumulate(const Tensor& acc, const Tensor& term) { return acc.defined() ? add(acc, term) : term; }

}  // namespace

Tensor spatial_loss(const Pyramid& preds, const Pyramid& targets, std::array<Real, 3>* by_scale) {
  Tensor total;
  for (size_t i = 0; i < 3; ++i) {
    check_pair(preds[i], targets[i], "spatial_loss");
    Tensor term = mean(abs(sub(preds[i], targets[i])));
    if (by_scale) (*by_scale)[i] = term.item();
    total = accumulate(total, term);
  }
  return total;
}

Tensor frequency_loss(const Pyramid& preds, const Pyramid& targets, std::array<Real, 3>* by_scale) {
  Tensor total;
  for (size_t i = 0; i < 3; ++i) {
    check_pair(preds[i], targets[i], "frequency_loss");
    Tensor term = mean(abs(sub(fft2_stacked(preds[i]), fft2_stacked(targets[i]))));
    if (by_scale) (*by_scale)[i] = term.item();
    total = accumulate(total, term);
  }
  return total;
}

int64_t fitted_window(int64_t height, int64_t width) {
  int64_t w = std::min<int64_t>({11, height, width});
  if (w % 2 == 0) --w;
  return std::max<int64_t>(w, 1);
}

Tensor wavelet_loss(const Pyramid& preds, const Pyramid& targets, bool raw_ssim, std::array<Real, 3>* by_scale) {
  Tensor total;
  for (size_t i = 0; i < 3; ++i) {
    check_pair(preds[i], targets[i], "wavelet_loss");
    Tensor sp = wavelet::dwt2_stacked(preds[i]);
    Tensor st = wavelet::dwt2_stacked(targets[i]);
    const Shape band{sp.dim(0), sp.dim(1), sp.dim(3), sp.dim(4)};
    SsimOptions opt;
    opt.window = fitted_window(band[2], band[3]);
    Tensor scale_sum;
    for (int64_t b = 0; b < 4; ++b) {
      Tensor s = ssim(reshape(slice(sp, 2, b, 1), band), reshape(slice(st, 2, b, 1), band), opt);
      Tensor term = raw_ssim ? s : add_scalar(neg(s), Real(1));
      scale_sum = accumulate(scale_sum, term);
    }
    if (by_scale) (*by_scale)[i] = scale_sum.item();
    total = accumulate(total, scale_sum);
  }
  return total;
}

LossResult mte_loss(const Pyramid& preds, const Pyramid& targets, const LossWeights& w) {
  w.validate();
  LossResult r;
  Tensor s = spatial_loss(preds, targets, &r.report.spatial_by_scale);
  r.report.spatial = s.item();
  Tensor total = s;
  if (w.use_frequency) {
    Tensor f = frequency_loss(preds, targets, &r.report.frequency_by_scale);
    r.report.frequency = f.item();
    total = add(total, scale(f, w.theta));
  }
  if (w.use_wavelet) {
    Tensor v = wavelet_loss(preds, targets, w.wavelet_raw_ssim, &r.report.wavelet_by_scale);
    r.report.wavelet = v.item();
    total = add(total, scale(v, w.lambda));
  }
  r.total = total;
  r.report.total = total.item();
  return r;
}

// ---------------------------------------------------------------------------
// SSIM

namespace {

std::vector<Real> gaussian_window(int64_t n, Real sigma) {
  std::vector<Real> g(static_cast<size_t>(n));
  const Real c = static_cast<Real>(n / 2);
  Real total = 0;
  for (int64_t i = 0; i < n; ++i) {
    Real d = static_cast<Real>(i) - c;
    g[static_cast<size_t>(i)] = std::exp(-(d * d) / (2 * sigma * sigma));
    total += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid separable correlation of an HxW plane with g (x) g.
void filter_valid(const Real* src, int64_t H, int64_t W, const std::vector<Real>& g, Real* dst, std::vector<Real>& tmp) {
  const int64_t n = static_cast<int64_t>(g.size()), Wo = W - n + 1, Ho = H - n + 1;
  tmp.assign(static_cast<size_t>(H * Wo), Real(0));
  for (int64_t i = 0; i < H; ++i) {
    for (int64_t j = 0; j < Wo; ++j) {
      Real acc = 0;
      for (int64_t k = 0; k < n; ++k) acc += g[static_cast<size_t>(k)] * src[i * W + j + k];
      tmp[static_cast<size_t>(i * Wo + j)] = acc;
    }
  }
  for (int64_t i = 0; i < Ho; ++i) {
    for (int64_t j = 0; j < Wo; ++j) {
      Real acc = 0;
      for (int64_t k = 0; k < n; ++k) acc += g[static_cast<size_t>(k)] * tmp[static_cast<size_t>((i + k) * Wo + j)];
      dst[i * Wo + j] = acc;
    }
  }
}

// Adjoint of filter_valid: scatters an (H-n+1)x(W-n+1) map back to HxW.
void filter_adjoint(const Real* src, int64_t H, int64_t W, const std::vector<Real>& g, Real* dst, std::vector<Real>& tmp) {
  const int64_t n = static_cast<int64_t>(g.size()), Wo = W - n + 1, Ho = H - n + 1;
  tmp.assign(static_cast<size_t>(H * Wo), Real(0));
  for (int64_t i = 0; i < Ho; ++i) {
    for (int64_t k = 0; k < n; ++k) {
      const Real gk = g[static_cast<size_t>(k)];
      for (int64_t j = 0; j < Wo; ++j) tmp[static_cast<size_t>((i + k) * Wo + j)] += gk * src[i * Wo + j];
    }
  }
  std::fill_n(dst, H * W, Real(0));
  for (int64_t i = 0; i < H; ++i) {
    for (int64_t j = 0; j < Wo; ++j) {
      const Real v = tmp[static_cast<size_t>(i * Wo + j)];
      for (int64_t k = 0; k < n; ++k) dst[i * W + j + k] += g[static_cast<size_t>(k)] * v;
    }
  }
}

struct SsimMoments {
  std::vector<Real> mx, my, mxx, myy, mxy;
};

}  // namespace

Tensor ssim(const Tensor& x, const Tensor& y, const SsimOptions& opt) {
  if (x.shape() != y.shape()) throw TensorError("ssim: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  if (x.ndim() != 4) throw TensorError("ssim expects [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t H = x.dim(2), W = x.dim(3), n = opt.window;
  if (n < 1 || n % 2 == 0) throw TensorError("ssim: window must be odd and positive");
  if (H < n || W < n) {
    throw TensorError("ssim: image " + shape_str(x.shape()) + " smaller than " + std::to_string(n) + "x" +
                      std::to_string(n) + " window");
  }
  const int64_t planes = x.dim(0) * x.dim(1), Ho = H - n + 1, Wo = W - n + 1, M = Ho * Wo;
  const Real c1 = (opt.k1 * opt.data_range) * (opt.k1 * opt.data_range);
  const Real c2 = (opt.k2 * opt.data_range) * (opt.k2 * opt.data_range);
  const auto g = gaussian_window(n, opt.sigma);

  auto mom = std::make_shared<SsimMoments>();
  for (auto* v : {&mom->mx, &mom->my, &mom->mxx, &mom->myy, &mom->mxy}) v->resize(static_cast<size_t>(planes * M));
  std::vector<Real> tmp, prod(static_cast<size_t>(H * W));
  Real total = 0;
  for (int64_t p = 0; p < planes; ++p) {
    const Real* xp = x.ptr() + p * H * W;
    const Real* yp = y.ptr() + p * H * W;
    const int64_t o = p * M;
    filter_valid(xp, H, W, g, mom->mx.data() + o, tmp);
    filter_valid(yp, H, W, g, mom->my.data() + o, tmp);
    for (int64_t i = 0; i < H * W; ++i) prod[static_cast<size_t>(i)] = xp[i] * xp[i];
    filter_valid(prod.data(), H, W, g, mom->mxx.data() + o, tmp);
    for (int64_t i = 0; i < H * W; ++i) prod[static_cast<size_t>(i)] = yp[i] * yp[i];
    filter_valid(prod.data(), H, W, g, mom->myy.data() + o, tmp);
    for (int64_t i = 0; i < H * W; ++i) prod[static_cast<size_t>(i)] = xp[i] * yp[i];
    filter_valid(prod.data(), H, W, g, mom->mxy.data() + o, tmp);
    for (int64_t i = o; i < o + M; ++i) {
      const auto k = static_cast<size_t>(i);
      const Real ux = mom->mx[k], uy = mom->my[k];
      const Real a1 = 2 * ux * uy + c1;
      const Real a2 = 2 * (mom->mxy[k] - ux * uy) + c2;
      const Real b1 = ux * ux + uy * uy + c1;
      const Real b2 = (mom->mxx[k] - ux * ux) + (mom->myy[k] - uy * uy) + c2;
      total += (a1 * a2) / (b1 * b2);
    }
  }
  const Real count = static_cast<Real>(planes * M);
  Tensor out = Tensor::scalar(total / count);
  if (!any_requires_grad({x, y})) return out;

  Tensor xs = x.detach(), ys = y.detach();
  return record("ssim", {x, y}, out,
                [mom, xs, ys, g, H, W, planes, M, c1, c2, count](const Tensor& gout, const std::vector<bool>& needs) {
    const Real seed = gout.item() / count;
    const auto n_in = static_cast<size_t>(xs.numel());
    std::vector<Real> gx(needs[0] ? n_in : 0), gy(needs[1] ? n_in : 0);
    std::vector<Real> d_ux(static_cast<size_t>(M)), d_uy(d_ux.size()), d_mxx(d_ux.size()), d_myy(d_ux.size()),
        d_mxy(d_ux.size());
    std::vector<Real> tmp, a_ux(static_cast<size_t>(H * W)), a_uy(a_ux.size()), a_mxx(a_ux.size()),
        a_myy(a_ux.size()), a_mxy(a_ux.size());
    for (int64_t p = 0; p < planes; ++p) {
      const int64_t o = p * M;
      for (int64_t i = 0; i < M; ++i) {
        const auto k = static_cast<size_t>(o + i);
        const auto j = static_cast<size_t>(i);
        const Real ux = mom->mx[k], uy = mom->my[k];
        const Real a1 = 2 * ux * uy + c1;
        const Real a2 = 2 * (mom->mxy[k] - ux * uy) + c2;
        const Real b1 = ux * ux + uy * uy + c1;
        const Real b2 = (mom->mxx[k] - ux * ux) + (mom->myy[k] - uy * uy) + c2;
        const Real den = b1 * b2;
        const Real s = (a1 * a2) / den;
        const Real diff = a2 - a1;
        const Real inv = Real(1) / b1 - Real(1) / b2;
        d_ux[j] = seed * (2 * uy * diff / den - 2 * ux * s * inv);
        d_uy[j] = seed * (2 * ux * diff / den - 2 * uy * s * inv);
        d_mxx[j] = seed * (-s / b2);
        d_myy[j] = d_mxx[j];
        d_mxy[j] = seed * (2 * a1 / den);
      }
      filter_adjoint(d_ux.data(), H, W, g, a_ux.data(), tmp);
      filter_adjoint(d_uy.data(), H, W, g, a_uy.data(), tmp);
      filter_adjoint(d_mxx.data(), H, W, g, a_mxx.data(), tmp);
      filter_adjoint(d_myy.data(), H, W, g, a_myy.data(), tmp);
      filter_adjoint(d_mxy.data(), H, W, g, a_mxy.data(), tmp);
      const Real* xp = xs.ptr() + p * H * W;
      const Real* yp = ys.ptr() + p * H * W;
      for (int64_t i = 0; i < H * W; ++i) {
        const auto j = static_cast<size_t>(i);
        const auto k = static_cast<size_t>(p * H * W + i);
        if (needs[0]) gx[k] = a_ux[j] + 2 * xp[i] * a_mxx[j] + yp[i] * a_mxy[j];
        if (needs[1]) gy[k] = a_uy[j] + 2 * yp[i] * a_myy[j] + xp[i] * a_mxy[j];
      }
    }
    std::vector<Tensor> grads(2);
    if (needs[0]) grads[0] = Tensor(xs.shape(), std::move(gx));
    if (needs[1]) grads[1] = Tensor(ys.shape(), std::move(gy));
    return grads;
  });
}

double psnr(const Tensor& x, const Tensor& y, double peak) {
  if (x.shape() != y.shape()) throw TensorError("psnr: shape mismatch");
  double se = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = static_cast<double>(x.ptr()[i]) - static_cast<double>(y.ptr()[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.numel());
  if (mse == 0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / mse);
}

Tensor clamp01(const Tensor& x) {
  std::vector<Real> v(x.data().begin(), x.data().end());
  for (auto& e : v) e = std::clamp(e, Real(0), Real(1));
  return Tensor(x.shape(), std::move(v));
}

}  // namespace wama::loss
