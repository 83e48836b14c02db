#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// the library's kernels except to build inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "wamair/rng.hpp"
#include "wamair/tensor.hpp"

namespace wama::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor with_value(const Tensor& t, int64_t i, Real v) {
  std::vector<Real> d(t.data().begin(), t.data().end());
  d[static_cast<size_t>(i)] = v;
  return Tensor(t.shape(), std::move(d));
}

inline Tensor axpy(const Tensor& x, Real a, const Tensor& dir) {
  std::vector<Real> d(x.data().begin(), x.data().end());
  for (size_t i = 0; i < d.size(); ++i) d[i] += a * dir.data()[i];
  return Tensor(x.shape(), std::move(d));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a.ptr()[i] - b.ptr()[i])));
  return m;
}

/// Copy of the values, for exact container comparisons.
inline std::vector<Real> values(const Tensor& t) { return {t.ptr(), t.ptr() + t.numel()}; }

inline double max_abs(const Tensor& a) {
  double m = 0;
  for (auto v : a.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

/// Loss as a function of a list of (non-tape) input tensors.
using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Central-difference gradient of `f` with respect to every entry of input `k`.
inline Tensor fd_gradient(const LossFn& f, std::vector<Tensor> inputs, size_t k, double eps = 1e-5) {
  const Tensor base = inputs[k];
  std::vector<Real> g(static_cast<size_t>(base.numel()));
  for (int64_t i = 0; i < base.numel(); ++i) {
    const Real v = base.ptr()[i];
    inputs[k] = with_value(base, i, v + static_cast<Real>(eps));
    const double fp = f(inputs).item();
    inputs[k] = with_value(base, i, v - static_cast<Real>(eps));
    const double fm = f(inputs).item();
    g[static_cast<size_t>(i)] = static_cast<Real>((fp - fm) / (2 * eps));
  }
  return Tensor(base.shape(), std::move(g));
}

/// Reverse-mode gradients of `f` for all inputs.
inline std::vector<Tensor> ad_gradients(const LossFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Tensor> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.watch(t));
  Tensor loss = f(leaves);
  Gradients g = tape.backward(loss);
  std::vector<Tensor> out;
  for (const auto& l : leaves) out.push_back(g.has(l) ? g.of(l) : Tensor::zeros(l.shape()));
  return out;
}

/// Normwise relative error ||a - n||_inf / max(||n||_inf, floor).
inline double rel_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8) {
  return max_abs_diff(analytic, numeric) / std::max(max_abs(numeric), floor);
}

/// Worst normwise relative error over all inputs, full finite differences.
inline double gradcheck(const LossFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5) {
  auto ad = ad_gradients(f, inputs);
  double worst = 0;
  for (size_t k = 0; k < inputs.size(); ++k) worst = std::max(worst, rel_error(ad[k], fd_gradient(f, inputs, k, eps)));
  return worst;
}

/// Directional check for large inputs: compares <grad, v> against the central
/// difference of f along a random direction v, per input tensor.
inline double directional_gradcheck(const LossFn& f, const std::vector<Tensor>& inputs, Rng& rng,
                                    double eps = 1e-5) {
  auto ad = ad_gradients(f, inputs);
  double worst = 0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor dir = random_tensor(inputs[k].shape(), rng);
    double analytic = 0;
    for (int64_t i = 0; i < dir.numel(); ++i) analytic += static_cast<double>(ad[k].ptr()[i] * dir.ptr()[i]);
    auto probe = inputs;
    probe[k] = axpy(inputs[k], static_cast<Real>(eps), dir);
    const double fp = f(probe).item();
    probe[k] = axpy(inputs[k], static_cast<Real>(-eps), dir);
    const double fm = f(probe).item();
    const double numeric = (fp - fm) / (2 * eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  return worst;
}

/// Full finite-difference check with the error measured normwise over the
/// whole gradient: max |analytic - numeric| across every input, divided by the
/// largest numeric entry across every input.
inline double gradcheck_global(const LossFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5) {
  auto ad = ad_gradients(f, inputs);
  double diff = 0, scale = 1e-300;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const Tensor num = fd_gradient(f, inputs, k, eps);
    diff = std::max(diff, max_abs_diff(ad[k], num));
    scale = std::max(scale, max_abs(num));
  }
  return diff / scale;
}

/// Directional derivatives for models too large for full differences. For
/// each input tensor k a random direction v_k gives a_k = <grad_k, v_k> and a
/// central difference n_k. The error is max_k |a_k - n_k| / max_k |n_k|, the
/// directional analogue of gradcheck_global. `joint` (optional) receives the
/// relative error along one direction that moves every input at once. Small
/// steps keep the differences from straddling relu, |x| and max kinks.
inline double directional_gradcheck_global(const LossFn& f, const std::vector<Tensor>& inputs, Rng& rng,
                                           double eps = 1e-6, double* joint = nullptr, double joint_eps = 1e-7) {
  auto ad = ad_gradients(f, inputs);
  std::vector<Tensor> dirs;
  for (const auto& t : inputs) dirs.push_back(random_tensor(t.shape(), rng));
  auto dot = [&](size_t k) {
    double s = 0;
    for (int64_t i = 0; i < dirs[k].numel(); ++i) s += static_cast<double>(ad[k].ptr()[i] * dirs[k].ptr()[i]);
    return s;
  };
  double diff = 0, scale = 1e-300, joint_a = 0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const double a = dot(k);
    joint_a += a;
    auto probe = inputs;
    probe[k] = axpy(inputs[k], static_cast<Real>(eps), dirs[k]);
    const double fp = f(probe).item();
    probe[k] = axpy(inputs[k], static_cast<Real>(-eps), dirs[k]);
    const double fm = f(probe).item();
    const double n = (fp - fm) / (2 * eps);
    diff = std::max(diff, std::abs(a - n));
    scale = std::max(scale, std::abs(n));
  }
  if (joint) {
    auto shifted = [&](double s) {
      std::vector<Tensor> p;
      for (size_t k = 0; k < inputs.size(); ++k) p.push_back(axpy(inputs[k], static_cast<Real>(s), dirs[k]));
      return static_cast<double>(f(p).item());
    };
    const double n = (shifted(joint_eps) - shifted(-joint_eps)) / (2 * joint_eps);
    *joint = std::abs(joint_a - n) / std::max({std::abs(joint_a), std::abs(n), 1e-300});
  }
  return diff / scale;
}

/// O(N^2) 2-D DFT of one HxW real plane; returns (re, im) row-major.
inline std::pair<std::vector<double>, std::vector<double>> naive_dft2(const Real* x, int64_t H, int64_t W) {
  std::vector<double> re(static_cast<size_t>(H * W)), im(re.size());
  for (int64_t u = 0; u < H; ++u) {
    for (int64_t v = 0; v < W; ++v) {
      std::complex<double> acc = 0;
      for (int64_t i = 0; i < H; ++i) {
        for (int64_t j = 0; j < W; ++j) {
          double ang = -2.0 * std::numbers::pi *
                       (static_cast<double>(u * i) / static_cast<double>(H) + static_cast<double>(v * j) / static_cast<double>(W));
          acc += static_cast<double>(x[i * W + j]) * std::polar(1.0, ang);
        }
      }
      re[static_cast<size_t>(u * W + v)] = acc.real();
      im[static_cast<size_t>(u * W + v)] = acc.imag();
    }
  }
  return {re, im};
}

/// Step-by-step selective scan recurrence (the defining oracle).
inline std::vector<double> naive_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm,
                                      const Tensor& Cm, const Tensor& D) {
  const int64_t B = u.dim(0), L = u.dim(1), Di = u.dim(2), N = A.dim(1);
  std::vector<double> y(static_cast<size_t>(u.numel()));
  for (int64_t b = 0; b < B; ++b) {
    std::vector<double> h(static_cast<size_t>(Di * N), 0.0);
    for (int64_t t = 0; t < L; ++t) {
      for (int64_t d = 0; d < Di; ++d) {
        const double dt = delta.at({b, t, d}), ut = u.at({b, t, d});
        double acc = 0;
        for (int64_t n = 0; n < N; ++n) {
          double& hk = h[static_cast<size_t>(d * N + n)];
          hk = std::exp(dt * A.at({d, n})) * hk + dt * Bm.at({b, t, n}) * ut;
          acc += Cm.at({b, t, n}) * hk;
        }
        y[static_cast<size_t>((b * L + t) * Di + d)] = acc + D.ptr()[d] * ut;
      }
    }
  }
  return y;
}

/// Frequency term evaluated with the O(N^2) DFT.
inline double naive_frequency_loss(const std::array<Tensor, 3>& p, const std::array<Tensor, 3>& t) {
  double total = 0;
  for (size_t s = 0; s < 3; ++s) {
    const int64_t H = p[s].dim(2), W = p[s].dim(3), planes = p[s].dim(0) * p[s].dim(1);
    double acc = 0;
    for (int64_t q = 0; q < planes; ++q) {
      auto [pr, pi] = naive_dft2(p[s].ptr() + q * H * W, H, W);
      auto [tr, ti] = naive_dft2(t[s].ptr() + q * H * W, H, W);
      for (size_t i = 0; i < pr.size(); ++i) acc += std::abs(pr[i] - tr[i]) + std::abs(pi[i] - ti[i]);
    }
    total += acc / static_cast<double>(2 * p[s].numel());
  }
  return total;
}

/// Mean SSIM computed window by window with an explicit 2-D Gaussian.
inline double naive_ssim(const Tensor& x, const Tensor& y, int64_t win = 11, double sigma = 1.5, double k1 = 0.01,
                         double k2 = 0.03) {
  const int64_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), c = win / 2;
  std::vector<double> w2(static_cast<size_t>(win * win));
  double total = 0;
  for (int64_t a = 0; a < win; ++a) {
    for (int64_t b = 0; b < win; ++b) {
      double v = std::exp(-static_cast<double>((a - c) * (a - c) + (b - c) * (b - c)) / (2 * sigma * sigma));
      w2[static_cast<size_t>(a * win + b)] = v;
      total += v;
    }
  }
  for (auto& v : w2) v /= total;
  const double c1 = k1 * k1, c2 = k2 * k2;
  double acc = 0;
  int64_t count = 0;
  for (int64_t p = 0; p < planes; ++p) {
    const Real* xp = x.ptr() + p * H * W;
    const Real* yp = y.ptr() + p * H * W;
    for (int64_t i = 0; i + win <= H; ++i) {
      for (int64_t j = 0; j + win <= W; ++j) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int64_t a = 0; a < win; ++a) {
          for (int64_t b = 0; b < win; ++b) {
            double w = w2[static_cast<size_t>(a * win + b)];
            double xv = xp[(i + a) * W + j + b], yv = yp[(i + a) * W + j + b];
            mx += w * xv;
            my += w * yv;
          }
        }
        for (int64_t a = 0; a < win; ++a) {
          for (int64_t b = 0; b < win; ++b) {
            double w = w2[static_cast<size_t>(a * win + b)];
            double xv = xp[(i + a) * W + j + b] - mx, yv = yp[(i + a) * W + j + b] - my;
            sxx += w * xv * xv;
            syy += w * yv * yv;
            sxy += w * xv * yv;
          }
        }
        acc += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++count;
      }
    }
  }
  return acc / static_cast<double>(count);
}

/// Per-channel correlation with zero padding, the plain six-loop way.
inline Tensor naive_depthwise(const Tensor& x, const Tensor& w, int64_t pad, int64_t dilation = 1) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), k = w.dim(2);
  const int64_t Ho = H + 2 * pad - (k - 1) * dilation, Wo = W + 2 * pad - (k - 1) * dilation;
  std::vector<Real> out(static_cast<size_t>(B * C * Ho * Wo), Real(0));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          Real acc = 0;
          for (int64_t a = 0; a < k; ++a)
            for (int64_t q = 0; q < k; ++q) {
              int64_t yi = i - pad + a * dilation, xj = j - pad + q * dilation;
              if (yi < 0 || yi >= H || xj < 0 || xj >= W) continue;
              acc += w.at({c, 0, a, q}) * x.at({b, c, yi, xj});
            }
          out[static_cast<size_t>(((b * C + c) * Ho + i) * Wo + j)] = acc;
        }
  return Tensor({B, C, Ho, Wo}, std::move(out));
}

}  // namespace wama::testing
