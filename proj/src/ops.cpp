#include "wamair/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace wama {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local int64_t g_macs = 0;

Tensor from_values(Shape shape, std::vector<Real> v) { return Tensor(std::move(shape), std::move(v)); }

std::vector<Real> buffer(int64_t n, Real fill = 0) {
  return std::vector<Real>(static_cast<size_t>(n), fill);
}

// Broadcast layout of a binary op: the larger operand defines the output; the
// smaller one is indexed by i / inner.
struct Broadcast {
  bool a_big = true;
  int64_t inner = 1;
  Shape out;
};

bool prefix_broadcastable(const Shape& big, const Shape& small, int64_t& inner) {
  if (shape_numel(small) == 1) {
    inner = shape_numel(big);
    return true;
  }
  if (big.size() != small.size()) return false;
  size_t k = 0;
  while (k < big.size() && small[k] == big[k]) ++k;
  for (size_t i = k; i < big.size(); ++i) {
    if (small[i] != 1) return false;
  }
  inner = 1;
  for (size_t i = k; i < big.size(); ++i) inner *= big[i];
  return true;
}

Broadcast broadcast_layout(const Tensor& a, const Tensor& b) {
  Broadcast bc;
  if (a.shape() == b.shape()) {
    bc.out = a.shape();
    return bc;
  }
  int64_t inner = 1;
  if (a.numel() >= b.numel() && prefix_broadcastable(a.shape(), b.shape(), inner)) {
    bc.a_big = true;
    bc.inner = inner;
    bc.out = a.shape();
    return bc;
  }
  if (prefix_broadcastable(b.shape(), a.shape(), inner)) {
    bc.a_big = false;
    bc.inner = inner;
    bc.out = b.shape();
    return bc;
  }
  throw TensorError("shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Sums a full-size gradient down to the broadcast operand.
Tensor reduce_to(const Tensor& g, const Shape& small, int64_t inner) {
  auto n = shape_numel(small);
  auto out = buffer(n);
  const Real* src = g.ptr();
  for (int64_t j = 0; j < n; ++j) {
    Real acc = 0;
    for (int64_t r = 0; r < inner; ++r) acc += src[j * inner + r];
    out[static_cast<size_t>(j)] = acc;
  }
  return from_values(small, std::move(out));
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  auto out = buffer(x.numel());
  const Real* p = x.ptr();
  for (int64_t i = 0; i < x.numel(); ++i) out[static_cast<size_t>(i)] = f(p[i]);
  return from_values(x.shape(), std::move(out));
}

// grad_in = grad_out * dfdx(x, y)
template <class F, class D>
Tensor unary_op(std::string_view name, const Tensor& x, F f, D dfdx) {
  Tensor y = map_unary(x, f);
  if (!any_requires_grad({x})) return y;
  Tensor xs = x.detach();
  Tensor ys = y.detach();
  return record(name, {x}, y, [xs, ys, dfdx](const Tensor& g, const std::vector<bool>&) {
    auto out = buffer(xs.numel());
    const Real* gp = g.ptr();
    const Real* xp = xs.ptr();
    const Real* yp = ys.ptr();
    for (int64_t i = 0; i < xs.numel(); ++i) out[static_cast<size_t>(i)] = gp[i] * dfdx(xp[i], yp[i]);
    return std::vector<Tensor>{from_values(xs.shape(), std::move(out))};
  });
}

Real sigmoid_scalar(Real v) {
  if (v >= 0) {
    Real e = std::exp(-v);
    return Real(1) / (Real(1) + e);
  }
  Real e = std::exp(v);
  return e / (Real(1) + e);
}

Real softplus_scalar(Real v) {
  if (v > Real(20)) return v;
  return std::log1p(std::exp(v));
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  if (kind == ElementwiseKind::scale || kind == ElementwiseKind::abs) {
    throw TensorError("elementwise: unary kind used with two tensors");
  }
  auto bc = broadcast_layout(a, b);
  auto n = shape_numel(bc.out);
  auto out = buffer(n);
  const Real* ap = a.ptr();
  const Real* bp = b.ptr();
  const int64_t inner = bc.inner;
  auto av = [&](int64_t i) { return bc.a_big ? ap[i] : ap[i / inner]; };
  auto bv = [&](int64_t i) { return bc.a_big ? bp[i / inner] : bp[i]; };
  for (int64_t i = 0; i < n; ++i) {
    Real r = 0;
    switch (kind) {
      case ElementwiseKind::add: r = av(i) + bv(i); break;
      case ElementwiseKind::sub: r = av(i) - bv(i); break;
      default: r = av(i) * bv(i); break;
    }
    out[static_cast<size_t>(i)] = r;
  }
  Tensor y = from_values(bc.out, std::move(out));
  if (!any_requires_grad({a, b})) return y;

  Tensor as = a.detach();
  Tensor bs = b.detach();
  std::string_view name = kind == ElementwiseKind::add ? "add" : kind == ElementwiseKind::sub ? "sub" : "mul";
  return record(name, {a, b}, y, [kind, as, bs, bc](const Tensor& g, const std::vector<bool>& needs) {
    std::vector<Tensor> grads(2);
    const int64_t n = g.numel();
    const Real* gp = g.ptr();
    const bool same = as.shape() == bs.shape();
    const bool a_full = same || bc.a_big;
    const bool b_full = same || !bc.a_big;
    for (int side = 0; side < 2; ++side) {
      if (!needs[side]) continue;
      const Tensor& self = side == 0 ? as : bs;
      const Tensor& other = side == 0 ? bs : as;
      const bool self_big = side == 0 ? a_full : b_full;
      const bool other_big = side == 0 ? b_full : a_full;
      auto full = buffer(n);
      for (int64_t i = 0; i < n; ++i) {
        Real d = 1;
        if (kind == ElementwiseKind::sub && side == 1) d = -1;
        if (kind == ElementwiseKind::mul) d = other_big ? other.ptr()[i] : other.ptr()[i / bc.inner];
        full[static_cast<size_t>(i)] = gp[i] * d;
      }
      Tensor gf = from_values(bc.out, std::move(full));
      grads[side] = self_big ? gf : reduce_to(gf, self.shape(), bc.inner);
    }
    return grads;
  });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, Real s) {
  switch (kind) {
    case ElementwiseKind::scale:
      return unary_op("scale", a, [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
    case ElementwiseKind::abs:
      return unary_op("abs", a, [](Real v) { return std::abs(v); },
                      [](Real v, Real) { return v > 0 ? Real(1) : v < 0 ? Real(-1) : Real(0); });
    default:
      return elementwise(kind, a, Tensor::scalar(s));
  }
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::mul, a, b); }
Tensor scale(const Tensor& a, Real s) { return elementwise(ElementwiseKind::scale, a, s); }
Tensor abs(const Tensor& a) { return elementwise(ElementwiseKind::abs, a); }
Tensor neg(const Tensor& a) { return scale(a, Real(-1)); }

Tensor add_scalar(const Tensor& a, Real s) {
  return unary_op("add_scalar", a, [s](Real v) { return v + s; }, [](Real, Real) { return Real(1); });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Tensor activation(Activation kind, const Tensor& x) {
  switch (kind) {
    case Activation::relu:
      return unary_op("relu", x, [](Real v) { return v > 0 ? v : Real(0); },
                      [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
    case Activation::sigmoid:
      return unary_op("sigmoid", x, sigmoid_scalar, [](Real, Real y) { return y * (Real(1) - y); });
    case Activation::silu:
      return unary_op("silu", x, [](Real v) { return v * sigmoid_scalar(v); },
                      [](Real v, Real) {
                        Real s = sigmoid_scalar(v);
                        return s * (Real(1) + v * (Real(1) - s));
                      });
    case Activation::softplus:
      return unary_op("softplus", x, softplus_scalar, [](Real v, Real) { return sigmoid_scalar(v); });
  }
  throw TensorError("unknown activation");
}

// ---------------------------------------------------------------------------
// reductions and layout

Tensor sum(const Tensor& x) {
  Real acc = 0;
  for (auto v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc);
  Shape shape = x.shape();
  return record("sum", {x}, y, [shape](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{Tensor::full(shape, g.item())};
  });
}

Tensor mean(const Tensor& x) {
  Real acc = 0;
  for (auto v : x.data()) acc += v;
  const Real n = static_cast<Real>(x.numel());
  Tensor y = Tensor::scalar(acc / n);
  Shape shape = x.shape();
  return record("mean", {x}, y, [shape, n](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{Tensor::full(shape, g.item() / n)};
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor y = x.reshaped_detached(std::move(shape));
  Shape from = x.shape();
  return record("reshape", {x}, y, [from](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{g.reshaped_detached(from)};
  });
}

namespace {

struct AxisSplit {
  int64_t outer = 1;
  int64_t extent = 1;
  int64_t inner = 1;
};

AxisSplit split_axis(const Shape& s, int64_t axis) {
  AxisSplit a;
  for (int64_t i = 0; i < axis; ++i) a.outer *= s[static_cast<size_t>(i)];
  a.extent = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

int64_t normalize_axis(int64_t axis, int64_t ndim) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) throw TensorError("axis out of range");
  return axis;
}

}  // namespace

Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t len) {
  axis = normalize_axis(axis, x.ndim());
  auto sp = split_axis(x.shape(), axis);
  if (start < 0 || len < 1 || start + len > sp.extent) {
    throw TensorError("slice [" + std::to_string(start) + ", +" + std::to_string(len) + ") out of range for " +
                      shape_str(x.shape()));
  }
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = len;
  auto out = buffer(shape_numel(os));
  const Real* p = x.ptr();
  for (int64_t o = 0; o < sp.outer; ++o) {
    std::copy_n(p + (o * sp.extent + start) * sp.inner, len * sp.inner,
                out.begin() + o * len * sp.inner);
  }
  Tensor y = from_values(os, std::move(out));
  Shape from = x.shape();
  return record("slice", {x}, y, [from, sp, start, len](const Tensor& g, const std::vector<bool>&) {
    auto gx = buffer(shape_numel(from));
    const Real* gp = g.ptr();
    for (int64_t o = 0; o < sp.outer; ++o) {
      std::copy_n(gp + o * len * sp.inner, len * sp.inner, gx.begin() + (o * sp.extent + start) * sp.inner);
    }
    return std::vector<Tensor>{from_values(from, std::move(gx))};
  });
}

Tensor concat(const std::vector<Tensor>& xs, int64_t axis) {
  if (xs.empty()) throw TensorError("concat of zero tensors");
  axis = normalize_axis(axis, xs[0].ndim());
  Shape os = xs[0].shape();
  int64_t total = 0;
  for (const auto& t : xs) {
    if (t.ndim() != xs[0].ndim()) throw TensorError("concat rank mismatch");
    for (int64_t i = 0; i < t.ndim(); ++i) {
      if (i != axis && t.shape()[static_cast<size_t>(i)] != os[static_cast<size_t>(i)]) {
        throw TensorError("concat: mismatched dims " + shape_str(t.shape()) + " vs " + shape_str(os));
      }
    }
    total += t.shape()[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total;
  auto sp = split_axis(os, axis);
  auto out = buffer(shape_numel(os));
  std::vector<int64_t> extents;
  int64_t offset = 0;
  for (const auto& t : xs) {
    int64_t e = t.shape()[static_cast<size_t>(axis)];
    extents.push_back(e);
    const Real* p = t.ptr();
    for (int64_t o = 0; o < sp.outer; ++o) {
      std::copy_n(p + o * e * sp.inner, e * sp.inner, out.begin() + (o * total + offset) * sp.inner);
    }
    offset += e;
  }
  Tensor y = from_values(os, std::move(out));
  std::vector<Shape> shapes;
  for (const auto& t : xs) shapes.push_back(t.shape());
  return record("concat", xs, y, [sp, extents, shapes, total](const Tensor& g, const std::vector<bool>& needs) {
    std::vector<Tensor> grads(extents.size());
    const Real* gp = g.ptr();
    int64_t off = 0;
    for (size_t k = 0; k < extents.size(); ++k) {
      int64_t e = extents[k];
      if (needs[k]) {
        auto gx = buffer(shape_numel(shapes[k]));
        for (int64_t o = 0; o < sp.outer; ++o) {
          std::copy_n(gp + (o * total + off) * sp.inner, e * sp.inner, gx.begin() + o * e * sp.inner);
        }
        grads[k] = from_values(shapes[k], std::move(gx));
      }
      off += e;
    }
    return grads;
  });
}

// ---------------------------------------------------------------------------
// convolution

namespace {

struct ConvGeom {
  int64_t batch, cin, h, w, cout, k, ho, wo, groups, cin_g, cout_g;
  Conv2dOptions opt;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dOptions& opt) {
  if (x.ndim() != 4) throw TensorError("conv2d expects [B,C,H,W] input, got " + shape_str(x.shape()));
  if (w.ndim() != 4) throw TensorError("conv2d expects [Cout,Cin/g,k,k] weight, got " + shape_str(w.shape()));
  if (opt.groups < 1 || opt.stride < 1 || opt.dilation < 1 || opt.pad < 0) {
    throw TensorError("conv2d: invalid stride/pad/dilation/groups");
  }
  ConvGeom g{};
  g.opt = opt;
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.k = w.dim(2);
  g.groups = opt.groups;
  if (w.dim(3) != g.k || g.k % 2 == 0) throw TensorError("conv2d: kernel must be square with odd size");
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw TensorError("conv2d: channels " + std::to_string(g.cin) + "->" + std::to_string(g.cout) +
                      " not divisible by groups " + std::to_string(g.groups));
  }
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (w.dim(1) != g.cin_g) {
    throw TensorError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.cout)) {
    throw TensorError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  int64_t span = (g.k - 1) * opt.dilation + 1;
  int64_t hn = g.h + 2 * opt.pad - span;
  int64_t wn = g.w + 2 * opt.pad - span;
  if (hn < 0 || wn < 0) throw TensorError("conv2d: negative output dims for input " + shape_str(x.shape()));
  g.ho = hn / opt.stride + 1;
  g.wo = wn / opt.stride + 1;
  return g;
}

// Output columns [lo, hi) whose input index ox*stride - pad + off lies in [0, n).
inline void valid_range(int64_t n, int64_t out_n, int64_t stride, int64_t off, int64_t& lo, int64_t& hi) {
  // ox*stride + off >= 0  and  ox*stride + off < n
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = n - off <= 0 ? 0 : (n - off - 1) / stride + 1;
  lo = std::min(lo, out_n);
  hi = std::clamp(hi, lo, out_n);
}

void im2col(const Real* img, const ConvGeom& g, int64_t c0, Real* col) {
  const auto& o = g.opt;
  const int64_t plane = g.ho * g.wo;
  int64_t row = 0;
  for (int64_t c = 0; c < g.cin_g; ++c) {
    const Real* src = img + (c0 + c) * g.h * g.w;
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx, ++row) {
        Real* dst = col + row * plane;
        int64_t xlo, xhi;
        valid_range(g.w, g.wo, o.stride, kx * o.dilation - o.pad, xlo, xhi);
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          Real* d = dst + oy * g.wo;
          int64_t iy = oy * o.stride - o.pad + ky * o.dilation;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(d, g.wo, Real(0));
            continue;
          }
          const Real* s = src + iy * g.w;
          std::fill_n(d, xlo, Real(0));
          const int64_t off = kx * o.dilation - o.pad;
          if (o.stride == 1) {
            for (int64_t ox = xlo; ox < xhi; ++ox) d[ox] = s[ox + off];
          } else {
            for (int64_t ox = xlo; ox < xhi; ++ox) d[ox] = s[ox * o.stride + off];
          }
          std::fill(d + xhi, d + g.wo, Real(0));
        }
      }
    }
  }
}

void col2im(const Real* col, const ConvGeom& g, int64_t c0, Real* img) {
  const auto& o = g.opt;
  const int64_t plane = g.ho * g.wo;
  int64_t row = 0;
  for (int64_t c = 0; c < g.cin_g; ++c) {
    Real* dst = img + (c0 + c) * g.h * g.w;
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx, ++row) {
        const Real* src = col + row * plane;
        int64_t xlo, xhi;
        valid_range(g.w, g.wo, o.stride, kx * o.dilation - o.pad, xlo, xhi);
        const int64_t off = kx * o.dilation - o.pad;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          int64_t iy = oy * o.stride - o.pad + ky * o.dilation;
          if (iy < 0 || iy >= g.h) continue;
          Real* d = dst + iy * g.w;
          const Real* s = src + oy * g.wo;
          for (int64_t ox = xlo; ox < xhi; ++ox) d[ox * o.stride + off] += s[ox];
        }
      }
    }
  }
}

bool is_depthwise(const ConvGeom& g) { return g.cin_g == 1 && g.cout_g == 1; }

// Direct depthwise kernels: one input plane per output plane.
void depthwise_forward(const Real* x, const Real* w, Real* y, const ConvGeom& g) {
  const auto& o = g.opt;
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t c = 0; c < g.cin; ++c) {
      const Real* src = x + (b * g.cin + c) * g.h * g.w;
      Real* dst = y + (b * g.cout + c) * g.ho * g.wo;
      const Real* wk = w + c * g.k * g.k;
      for (int64_t ky = 0; ky < g.k; ++ky) {
        for (int64_t kx = 0; kx < g.k; ++kx) {
          const Real wv = wk[ky * g.k + kx];
          const int64_t off = kx * o.dilation - o.pad;
          int64_t xlo, xhi;
          valid_range(g.w, g.wo, o.stride, off, xlo, xhi);
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            int64_t iy = oy * o.stride - o.pad + ky * o.dilation;
            if (iy < 0 || iy >= g.h) continue;
            const Real* s = src + iy * g.w;
            Real* d = dst + oy * g.wo;
            if (o.stride == 1) {
              for (int64_t ox = xlo; ox < xhi; ++ox) d[ox] += wv * s[ox + off];
            } else {
              for (int64_t ox = xlo; ox < xhi; ++ox) d[ox] += wv * s[ox * o.stride + off];
            }
          }
        }
      }
    }
  }
}

void depthwise_backward(const Real* x, const Real* w, const Real* gy, Real* gx, Real* gw, const ConvGeom& g) {
  const auto& o = g.opt;
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t c = 0; c < g.cin; ++c) {
      const Real* src = x + (b * g.cin + c) * g.h * g.w;
      Real* gsrc = gx ? gx + (b * g.cin + c) * g.h * g.w : nullptr;
      const Real* gd = gy + (b * g.cout + c) * g.ho * g.wo;
      const Real* wk = w + c * g.k * g.k;
      for (int64_t ky = 0; ky < g.k; ++ky) {
        for (int64_t kx = 0; kx < g.k; ++kx) {
          const Real wv = wk[ky * g.k + kx];
          const int64_t off = kx * o.dilation - o.pad;
          int64_t xlo, xhi;
          valid_range(g.w, g.wo, o.stride, off, xlo, xhi);
          Real acc = 0;
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            int64_t iy = oy * o.stride - o.pad + ky * o.dilation;
            if (iy < 0 || iy >= g.h) continue;
            const Real* s = src + iy * g.w;
            const Real* gr = gd + oy * g.wo;
            for (int64_t ox = xlo; ox < xhi; ++ox) acc += gr[ox] * s[ox * o.stride + off];
            if (gsrc) {
              Real* gs = gsrc + iy * g.w;
              for (int64_t ox = xlo; ox < xhi; ++ox) gs[ox * o.stride + off] += wv * gr[ox];
            }
          }
          if (gw) gw[c * g.k * g.k + ky * g.k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opt) {
  const ConvGeom g = conv_geometry(x, w, bias, opt);
  const int64_t plane = g.ho * g.wo;
  const int64_t kdim = g.cin_g * g.k * g.k;
  g_macs += g.batch * g.cout * plane * kdim;
  auto out = buffer(g.batch * g.cout * plane);
  if (is_depthwise(g)) {
    depthwise_forward(x.ptr(), w.ptr(), out.data(), g);
  } else {
    std::vector<Real> col(static_cast<size_t>(kdim * plane));
    for (int64_t b = 0; b < g.batch; ++b) {
      const Real* img = x.ptr() + b * g.cin * g.h * g.w;
      for (int64_t gr = 0; gr < g.groups; ++gr) {
        im2col(img, g, gr * g.cin_g, col.data());
        CMapMat wm(w.ptr() + gr * g.cout_g * kdim, g.cout_g, kdim);
        CMapMat cm(col.data(), kdim, plane);
        MapMat om(out.data() + (b * g.cout + gr * g.cout_g) * plane, g.cout_g, plane);
        om.noalias() = wm * cm;
      }
    }
  }
  if (bias.defined()) {
    for (int64_t b = 0; b < g.batch; ++b) {
      for (int64_t c = 0; c < g.cout; ++c) {
        Real bv = bias.ptr()[c];
        Real* d = out.data() + (b * g.cout + c) * plane;
        for (int64_t i = 0; i < plane; ++i) d[i] += bv;
      }
    }
  }
  Tensor y = from_values({g.batch, g.cout, g.ho, g.wo}, std::move(out));
  if (!any_requires_grad({x, w, bias})) return y;

  Tensor xs = x.detach();
  Tensor ws = w.detach();
  bool has_bias = bias.defined();
  return record("conv2d", {x, w, bias}, y, [g, xs, ws, has_bias, plane, kdim](const Tensor& gy, const std::vector<bool>& needs) {
    std::vector<Tensor> grads(3);
    std::vector<Real> gx, gw;
    if (needs[0]) gx = buffer(xs.numel());
    if (needs[1]) gw = buffer(ws.numel());
    if (is_depthwise(g)) {
      depthwise_backward(xs.ptr(), ws.ptr(), gy.ptr(), needs[0] ? gx.data() : nullptr,
                         needs[1] ? gw.data() : nullptr, g);
    } else if (needs[0] || needs[1]) {
      std::vector<Real> col(static_cast<size_t>(kdim * plane));
      for (int64_t b = 0; b < g.batch; ++b) {
        const Real* img = xs.ptr() + b * g.cin * g.h * g.w;
        for (int64_t gr = 0; gr < g.groups; ++gr) {
          CMapMat gm(gy.ptr() + (b * g.cout + gr * g.cout_g) * plane, g.cout_g, plane);
          if (needs[1]) {
            im2col(img, g, gr * g.cin_g, col.data());
            CMapMat cm(col.data(), kdim, plane);
            MapMat gwm(gw.data() + gr * g.cout_g * kdim, g.cout_g, kdim);
            gwm.noalias() += gm * cm.transpose();
          }
          if (needs[0]) {
            CMapMat wm(ws.ptr() + gr * g.cout_g * kdim, g.cout_g, kdim);
            MapMat cm(col.data(), kdim, plane);
            cm.noalias() = wm.transpose() * gm;
            col2im(col.data(), g, gr * g.cin_g, gx.data() + b * g.cin * g.h * g.w);
          }
        }
      }
    }
    if (needs[0]) grads[0] = from_values(xs.shape(), std::move(gx));
    if (needs[1]) grads[1] = from_values(ws.shape(), std::move(gw));
    if (has_bias && needs[2]) {
      auto gb = buffer(g.cout);
      for (int64_t b = 0; b < g.batch; ++b) {
        for (int64_t c = 0; c < g.cout; ++c) {
          const Real* d = gy.ptr() + (b * g.cout + c) * plane;
          Real acc = 0;
          for (int64_t i = 0; i < plane; ++i) acc += d[i];
          gb[static_cast<size_t>(c)] += acc;
        }
      }
      grads[2] = from_values({g.cout}, std::move(gb));
    }
    return grads;
  });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.ndim() != 3 || w.ndim() != 2 || w.dim(0) != x.dim(2)) {
    throw TensorError("causal_conv1d: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  }
  if (bias.defined() && bias.numel() != x.dim(2)) throw TensorError("causal_conv1d: bias shape");
  const int64_t B = x.dim(0), L = x.dim(1), D = x.dim(2), K = w.dim(1);
  auto out = buffer(x.numel());
  const Real* xp = x.ptr();
  const Real* wp = w.ptr();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t t = 0; t < L; ++t) {
      Real* y = out.data() + (b * L + t) * D;
      for (int64_t d = 0; d < D; ++d) {
        Real acc = bias.defined() ? bias.ptr()[d] : Real(0);
        for (int64_t j = 0; j < K; ++j) {
          int64_t s = t - (K - 1) + j;
          if (s >= 0) acc += wp[d * K + j] * xp[(b * L + s) * D + d];
        }
        y[d] = acc;
      }
    }
  }
  Tensor y = from_values(x.shape(), std::move(out));
  Tensor xs = x.detach();
  Tensor ws = w.detach();
  bool has_bias = bias.defined();
  return record("causal_conv1d", {x, w, bias}, y,
                [xs, ws, has_bias, B, L, D, K](const Tensor& g, const std::vector<bool>& needs) {
    std::vector<Tensor> grads(3);
    auto gx = buffer(xs.numel());
    auto gw = buffer(ws.numel());
    auto gb = buffer(D);
    const Real* gp = g.ptr();
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t t = 0; t < L; ++t) {
        for (int64_t d = 0; d < D; ++d) {
          Real gv = gp[(b * L + t) * D + d];
          gb[static_cast<size_t>(d)] += gv;
          for (int64_t j = 0; j < K; ++j) {
            int64_t s = t - (K - 1) + j;
            if (s < 0) continue;
            gx[static_cast<size_t>((b * L + s) * D + d)] += ws.ptr()[d * K + j] * gv;
            gw[static_cast<size_t>(d * K + j)] += xs.ptr()[(b * L + s) * D + d] * gv;
          }
        }
      }
    }
    if (needs[0]) grads[0] = from_values(xs.shape(), std::move(gx));
    if (needs[1]) grads[1] = from_values(ws.shape(), std::move(gw));
    if (has_bias && needs[2]) grads[2] = from_values({D}, std::move(gb));
    return grads;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.ndim() != 2 || x.dim(-1) != w.dim(1)) {
    throw TensorError("linear: x " + shape_str(x.shape()) + " incompatible with w " + shape_str(w.shape()));
  }
  const int64_t in = w.dim(1), outd = w.dim(0), rows = x.numel() / in;
  if (bias.defined() && bias.numel() != outd) throw TensorError("linear: bias shape " + shape_str(bias.shape()));
  g_macs += rows * in * outd;
  Shape os = x.shape();
  os.back() = outd;
  auto out = buffer(rows * outd);
  {
    CMapMat xm(x.ptr(), rows, in);
    CMapMat wm(w.ptr(), outd, in);
    MapMat ym(out.data(), rows, outd);
    ym.noalias() = xm * wm.transpose();
    if (bias.defined()) {
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t o = 0; o < outd; ++o) out[static_cast<size_t>(r * outd + o)] += bias.ptr()[o];
      }
    }
  }
  Tensor y = from_values(os, std::move(out));
  Tensor xs = x.detach();
  Tensor ws = w.detach();
  bool has_bias = bias.defined();
  return record("linear", {x, w, bias}, y, [xs, ws, has_bias, rows, in, outd](const Tensor& g, const std::vector<bool>& needs) {
    std::vector<Tensor> grads(3);
    CMapMat gm(g.ptr(), rows, outd);
    if (needs[0]) {
      auto gx = buffer(rows * in);
      MapMat gxm(gx.data(), rows, in);
      gxm.noalias() = gm * CMapMat(ws.ptr(), outd, in);
      grads[0] = from_values(xs.shape(), std::move(gx));
    }
    if (needs[1]) {
      auto gw = buffer(outd * in);
      MapMat gwm(gw.data(), outd, in);
      gwm.noalias() = gm.transpose() * CMapMat(xs.ptr(), rows, in);
      grads[1] = from_values(ws.shape(), std::move(gw));
    }
    if (has_bias && needs[2]) {
      auto gb = buffer(outd);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t o = 0; o < outd; ++o) gb[static_cast<size_t>(o)] += g.ptr()[r * outd + o];
      }
      grads[2] = from_values({outd}, std::move(gb));
    }
    return grads;
  });
}

// ---------------------------------------------------------------------------
// pooling and resizing

Tensor pool_global(const Tensor& x, PoolKind kind) {
  if (x.ndim() != 4) throw TensorError("pool_global expects [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  auto out = buffer(planes);
  std::vector<int64_t> argmax(static_cast<size_t>(planes), 0);
  for (int64_t p = 0; p < planes; ++p) {
    const Real* s = x.ptr() + p * hw;
    if (kind == PoolKind::avg) {
      Real acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += s[i];
      out[static_cast<size_t>(p)] = acc / static_cast<Real>(hw);
    } else {
      int64_t best = 0;
      for (int64_t i = 1; i < hw; ++i) {
        if (s[i] > s[best]) best = i;
      }
      argmax[static_cast<size_t>(p)] = best;
      out[static_cast<size_t>(p)] = s[best];
    }
  }
  Tensor y = from_values({x.dim(0), x.dim(1), 1, 1}, std::move(out));
  Shape from = x.shape();
  return record(kind == PoolKind::avg ? "pool_avg" : "pool_max", {x}, y,
                [from, kind, argmax, planes, hw](const Tensor& g, const std::vector<bool>&) {
    auto gx = buffer(planes * hw);
    for (int64_t p = 0; p < planes; ++p) {
      Real gv = g.ptr()[p];
      if (kind == PoolKind::avg) {
        Real v = gv / static_cast<Real>(hw);
        std::fill_n(gx.begin() + p * hw, hw, v);
      } else {
        gx[static_cast<size_t>(p * hw + argmax[static_cast<size_t>(p)])] = gv;
      }
    }
    return std::vector<Tensor>{from_values(from, std::move(gx))};
  });
}

namespace {

struct Tap {
  int64_t i0, i1;
  Real w0, w1;
};

// Half-pixel-center bilinear taps for resizing n -> m samples.
std::vector<Tap> bilinear_taps(int64_t n, int64_t m) {
  std::vector<Tap> taps(static_cast<size_t>(m));
  const Real ratio = static_cast<Real>(n) / static_cast<Real>(m);
  for (int64_t j = 0; j < m; ++j) {
    Real src = (static_cast<Real>(j) + Real(0.5)) * ratio - Real(0.5);
    if (src < 0) src = 0;
    auto i0 = static_cast<int64_t>(std::floor(src));
    i0 = std::min(i0, n - 1);
    int64_t i1 = std::min(i0 + 1, n - 1);
    Real l = src - static_cast<Real>(i0);
    taps[static_cast<size_t>(j)] = Tap{i0, i1, Real(1) - l, l};
  }
  return taps;
}

}  // namespace

Tensor resize(const Tensor& x, ResizeMode mode) {
  if (x.ndim() != 4) throw TensorError("resize expects [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Ho, Wo;
  if (mode == ResizeMode::up2_bilinear) {
    Ho = 2 * H;
    Wo = 2 * W;
  } else {
    if (H % 2 || W % 2) throw TensorError("resize: down2 needs even dims, got " + shape_str(x.shape()));
    Ho = H / 2;
    Wo = W / 2;
  }
  auto out = buffer(planes * Ho * Wo);
  Shape os{x.dim(0), x.dim(1), Ho, Wo};
  Shape from = x.shape();
  if (mode == ResizeMode::down2_strided) {
    for (int64_t p = 0; p < planes; ++p) {
      for (int64_t i = 0; i < Ho; ++i) {
        for (int64_t j = 0; j < Wo; ++j) {
          out[static_cast<size_t>((p * Ho + i) * Wo + j)] = x.ptr()[(p * H + 2 * i) * W + 2 * j];
        }
      }
    }
    Tensor y = from_values(os, std::move(out));
    return record("resize_strided", {x}, y, [from, planes, H, W, Ho, Wo](const Tensor& g, const std::vector<bool>&) {
      auto gx = buffer(planes * H * W);
      for (int64_t p = 0; p < planes; ++p) {
        for (int64_t i = 0; i < Ho; ++i) {
          for (int64_t j = 0; j < Wo; ++j) {
            gx[static_cast<size_t>((p * H + 2 * i) * W + 2 * j)] = g.ptr()[(p * Ho + i) * Wo + j];
          }
        }
      }
      return std::vector<Tensor>{from_values(from, std::move(gx))};
    });
  }
  auto ty = bilinear_taps(H, Ho);
  auto tx = bilinear_taps(W, Wo);
  for (int64_t p = 0; p < planes; ++p) {
    const Real* s = x.ptr() + p * H * W;
    Real* d = out.data() + p * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i) {
      const Tap& a = ty[static_cast<size_t>(i)];
      const Real* r0 = s + a.i0 * W;
      const Real* r1 = s + a.i1 * W;
      for (int64_t j = 0; j < Wo; ++j) {
        const Tap& b = tx[static_cast<size_t>(j)];
        d[i * Wo + j] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  Tensor y = from_values(os, std::move(out));
  return record("resize_bilinear", {x}, y, [from, planes, H, W, Ho, Wo, ty, tx](const Tensor& g, const std::vector<bool>&) {
    auto gx = buffer(planes * H * W);
    for (int64_t p = 0; p < planes; ++p) {
      Real* d = gx.data() + p * H * W;
      const Real* gs = g.ptr() + p * Ho * Wo;
      for (int64_t i = 0; i < Ho; ++i) {
        const Tap& a = ty[static_cast<size_t>(i)];
        for (int64_t j = 0; j < Wo; ++j) {
          const Tap& b = tx[static_cast<size_t>(j)];
          Real gv = gs[i * Wo + j];
          d[a.i0 * W + b.i0] += a.w0 * b.w0 * gv;
          d[a.i0 * W + b.i1] += a.w0 * b.w1 * gv;
          d[a.i1 * W + b.i0] += a.w1 * b.w0 * gv;
          d[a.i1 * W + b.i1] += a.w1 * b.w1 * gv;
        }
      }
    }
    return std::vector<Tensor>{from_values(from, std::move(gx))};
  });
}

// ---------------------------------------------------------------------------
// FFT

namespace {

bool is_pow2(int64_t n) { return n >= 1 && (n & (n - 1)) == 0; }

using Complex = std::complex<Real>;

// In-place iterative radix-2 Cooley-Tukey over `n` samples spaced by `stride`.
void fft1d(Complex* a, int64_t n, int64_t stride, const std::vector<Complex>& twiddle) {
  for (int64_t i = 1, j = 0; i < n; ++i) {
    int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i * stride], a[j * stride]);
  }
  for (int64_t len = 2; len <= n; len <<= 1) {
    const int64_t half = len / 2, step = n / len;
    for (int64_t i = 0; i < n; i += len) {
      for (int64_t k = 0; k < half; ++k) {
        Complex u = a[(i + k) * stride];
        Complex v = a[(i + k + half) * stride] * twiddle[static_cast<size_t>(k * step)];
        a[(i + k) * stride] = u + v;
        a[(i + k + half) * stride] = u - v;
      }
    }
  }
}

std::vector<Complex> twiddles(int64_t n) {
  std::vector<Complex> t(static_cast<size_t>(std::max<int64_t>(n / 2, 1)));
  for (int64_t k = 0; k < n / 2; ++k) {
    double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    t[static_cast<size_t>(k)] = Complex(static_cast<Real>(std::cos(ang)), static_cast<Real>(std::sin(ang)));
  }
  return t;
}

void fft2_plane(Complex* a, int64_t H, int64_t W, const std::vector<Complex>& th, const std::vector<Complex>& tw) {
  for (int64_t r = 0; r < H; ++r) fft1d(a + r * W, W, 1, tw);
  for (int64_t c = 0; c < W; ++c) fft1d(a + c, H, W, th);
}

}  // namespace

Tensor fft2_stacked(const Tensor& x) {
  if (x.ndim() < 2) throw TensorError("fft2 needs at least 2 dims");
  const int64_t H = x.dim(-2), W = x.dim(-1);
  if (!is_pow2(H) || !is_pow2(W)) {
    throw TensorError("fft2: spatial dims must be powers of two, got " + shape_str(x.shape()));
  }
  const int64_t planes = x.numel() / (H * W);
  auto th = twiddles(H), tw = twiddles(W);
  auto out = buffer(2 * x.numel());
  std::vector<Complex> work(static_cast<size_t>(H * W));
  for (int64_t p = 0; p < planes; ++p) {
    const Real* s = x.ptr() + p * H * W;
    for (int64_t i = 0; i < H * W; ++i) work[static_cast<size_t>(i)] = Complex(s[i], 0);
    fft2_plane(work.data(), H, W, th, tw);
    Real* re = out.data() + 2 * p * H * W;
    Real* im = re + H * W;
    for (int64_t i = 0; i < H * W; ++i) {
      re[i] = work[static_cast<size_t>(i)].real();
      im[i] = work[static_cast<size_t>(i)].imag();
    }
  }
  Shape os(x.shape().begin(), x.shape().end() - 2);
  os.insert(os.end(), {2, H, W});
  Tensor y = from_values(os, std::move(out));
  Shape from = x.shape();
  // d/dx of <gR, Re Fx> + <gS, Im Fx> is Re(F (gR - i gS)) since F is symmetric.
  return record("fft2", {x}, y, [from, planes, H, W](const Tensor& g, const std::vector<bool>&) {
    auto th2 = twiddles(H), tw2 = twiddles(W);
    auto gx = buffer(planes * H * W);
    std::vector<Complex> work(static_cast<size_t>(H * W));
    for (int64_t p = 0; p < planes; ++p) {
      const Real* gr = g.ptr() + 2 * p * H * W;
      const Real* gi = gr + H * W;
      for (int64_t i = 0; i < H * W; ++i) work[static_cast<size_t>(i)] = Complex(gr[i], -gi[i]);
      fft2_plane(work.data(), H, W, th2, tw2);
      for (int64_t i = 0; i < H * W; ++i) gx[static_cast<size_t>(p * H * W + i)] = work[static_cast<size_t>(i)].real();
    }
    return std::vector<Tensor>{from_values(from, std::move(gx))};
  });
}

std::pair<Tensor, Tensor> fft2(const Tensor& x) {
  Tensor s = fft2_stacked(x);
  const int64_t axis = s.ndim() - 3;
  return {reshape(slice(s, axis, 0, 1), x.shape()), reshape(slice(s, axis, 1, 1), x.shape())};
}

void MacCounter::reset() { g_macs = 0; }
int64_t MacCounter::value() { return g_macs; }
void MacCounter::add(int64_t macs) { g_macs += macs; }

}  // namespace wama
