#include "wamair/wtconv.hpp"

#include "wamair/ops.hpp"
#include "wamair/wavelet.hpp"

namespace wama::nn {

void WtConvParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(join_name(prefix, "spatial"), spatial);
  for (size_t l = 0; l < subband.size(); ++l) f(join_name(prefix, "subband" + std::to_string(l)), subband[l]);
}

WtConvParams WtConvParams::init(int64_t channels, int levels, int64_t kernel, Rng& rng) {
  if (levels < 1 || levels > 3) throw TensorError("wtconv levels must be in 1..3");
  WtConvParams p;
  p.levels = levels;
  p.spatial = init::normal({channels, 1, kernel, kernel}, Real(0.02), rng);
  auto s = p.spatial.mutable_data();
  const int64_t center = (kernel / 2) * kernel + kernel / 2;
  for (int64_t c = 0; c < channels; ++c) s[static_cast<size_t>(c * kernel * kernel + center)] += Real(1);
  for (int l = 0; l < levels; ++l) p.subband.push_back(init::normal({4 * channels, 1, kernel, kernel}, Real(0.02), rng));
  return p;
}

WtConvParams WtConvParams::zeros(int64_t channels, int levels, int64_t kernel) {
  WtConvParams p;
  p.levels = levels;
  p.spatial = Tensor::zeros({channels, 1, kernel, kernel});
  for (int l = 0; l < levels; ++l) p.subband.push_back(Tensor::zeros({4 * channels, 1, kernel, kernel}));
  return p;
}

Tensor wtconv_apply(const Tensor& x, const WtConvParams& p) {
  if (x.ndim() != 4 || x.dim(1) != p.channels()) {
    throw TensorError("wtconv: input " + shape_str(x.shape()) + " does not match " + std::to_string(p.channels()) +
                      " channels");
  }
  if (static_cast<int>(p.subband.size()) != p.levels) throw TensorError("wtconv: level count mismatch");
  const int64_t B = x.dim(0), C = x.dim(1), m = int64_t{1} << p.levels;
  if (x.dim(2) % m || x.dim(3) % m) {
    throw TensorError("wtconv: spatial dims of " + shape_str(x.shape()) + " must be divisible by " +
                      std::to_string(m));
  }
  const int64_t k = p.kernel();
  Conv2dOptions dw{.stride = 1, .pad = k / 2, .dilation = 1, .groups = 4 * C};

  std::vector<Tensor> filtered_ll, filtered_high;
  Tensor cur = x;
  for (int l = 0; l < p.levels; ++l) {
    Tensor s = wavelet::dwt2_stacked(cur);  // [B,C,4,h,w]
    const int64_t h = s.dim(3), w = s.dim(4);
    cur = reshape(slice(s, 2, 0, 1), {B, C, h, w});
    Tensor t = conv2d(reshape(s, {B, 4 * C, h, w}), p.subband[static_cast<size_t>(l)], {}, dw);
    t = reshape(t, {B, C, 4, h, w});
    filtered_ll.push_back(slice(t, 2, 0, 1));
    filtered_high.push_back(slice(t, 2, 1, 3));
  }

  Tensor coarse;
  for (int l = p.levels; l-- > 0;) {
    Tensor ll = filtered_ll[static_cast<size_t>(l)];
    if (coarse.defined()) ll = add(ll, reshape(coarse, ll.shape()));
    coarse = wavelet::idwt2_stacked(concat({ll, filtered_high[static_cast<size_t>(l)]}, 2));
  }

  Conv2dOptions direct{.stride = 1, .pad = k / 2, .dilation = 1, .groups = C};
  return add(conv2d(x, p.spatial, {}, direct), coarse);
}

void StemParams::visit(const std::string& prefix, const ParamVisitor& f) {
  for (size_t i = 0; i < convs.size(); ++i) convs[i].visit(join_name(prefix, "conv" + std::to_string(i)), f);
  if (use_wtconv) wt.visit(join_name(prefix, "wtconv"), f);
}

StemParams StemParams::init(int64_t in_channels, int64_t channels, bool use_wtconv, int levels, int64_t kernel,
                            Rng& rng) {
  StemParams p;
  p.use_wtconv = use_wtconv;
  for (size_t i = 0; i < p.convs.size(); ++i) {
    p.convs[i] = init::conv(i == 0 ? in_channels : channels, channels, 3, rng);
  }
  if (use_wtconv) p.wt = WtConvParams::init(channels, levels, kernel, rng);
  return p;
}

Tensor gmwtconvs_apply(const Tensor& img, const StemParams& p) {
  Tensor h = img;
  for (const auto& c : p.convs) h = relu(conv2d(h, c.weight, c.bias, {.stride = 1, .pad = 1}));
  return p.use_wtconv ? wtconv_apply(h, p.wt) : h;
}

}  // namespace wama::nn
