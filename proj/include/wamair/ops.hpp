#pragma once

#include <utility>
#include <vector>

#include "wamair/tensor.hpp"

namespace wama {

enum class ElementwiseKind { add, sub, mul, scale, abs };

/// Binary ops broadcast `b` over `a` when `b` is a scalar or matches a leading
/// prefix of `a`'s dims with trailing 1s (e.g. [B,C,1,1] against [B,C,H,W]).
/// The broadcast operand may be on either side.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b);
/// `scale` multiplies by `s`; `abs` ignores it.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, Real s = 0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);
Tensor abs(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);

enum class Activation { relu, silu, sigmoid, softplus };
Tensor activation(Activation kind, const Tensor& x);
inline Tensor relu(const Tensor& x) { return activation(Activation::relu, x); }
inline Tensor silu(const Tensor& x) { return activation(Activation::silu, x); }
inline Tensor sigmoid(const Tensor& x) { return activation(Activation::sigmoid, x); }
inline Tensor softplus(const Tensor& x) { return activation(Activation::softplus, x); }

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Contiguous range [start, start+len) along `axis`.
Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t len);
Tensor concat(const std::vector<Tensor>& xs, int64_t axis);

struct Conv2dOptions {
  int64_t stride = 1;
  int64_t pad = 0;
  int64_t dilation = 1;
  int64_t groups = 1;
};

/// Cross-correlation with zero padding. x: [B,Cin,H,W], w: [Cout,Cin/groups,k,k],
/// bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opt = {});

/// Depthwise causal 1-D convolution over the middle axis with left zero
/// padding. x: [B,L,D], w: [D,K], bias: [D] or undefined.
Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Affine map over the last axis. x: [..., in], w: [out, in], bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

enum class PoolKind { avg, max };
/// [B,C,H,W] -> [B,C,1,1]. Max routes its gradient to the first maximal
/// element in row-major order.
Tensor pool_global(const Tensor& x, PoolKind kind);

enum class ResizeMode { down2_bilinear, up2_bilinear, down2_strided };
/// Bilinear modes use half-pixel centers (align_corners = false).
Tensor resize(const Tensor& x, ResizeMode mode);

/// Unnormalized 2-D DFT over the last two axes (powers of two only).
/// Returns [..., 2, H, W] with real parts at index 0 and imaginary at 1.
Tensor fft2_stacked(const Tensor& x);
/// Same transform split into (real, imag), each shaped like `x`.
std::pair<Tensor, Tensor> fft2(const Tensor& x);

/// Multiply-accumulate count of conv2d/linear calls on this thread since the
/// last reset. Used by the FLOPs report.
struct MacCounter {
  static void reset();
  static int64_t value();
  static void add(int64_t macs);
};

}  // namespace wama
