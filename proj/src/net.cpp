#include "wamair/net.hpp"

#include "wamair/ops.hpp"

namespace wama::nn {

namespace {

constexpr Conv2dOptions kSame3{.stride = 1, .pad = 1};

Tensor conv(const Tensor& x, const ConvParams& p, Conv2dOptions opt = kSame3) {
  return conv2d(x, p.weight, p.bias, opt);
}

}  // namespace

void NetConfig::validate() const {
  if (channels < 4) throw ConfigError("net.channels must be >= 4");
  if (blocks < 1) throw ConfigError("net.blocks must be >= 1");
  if (wtconv_levels < 1 || wtconv_levels > 3) throw ConfigError("net.wtconv_levels must be in 1..3");
  if (wtconv_kernel < 1 || wtconv_kernel % 2 == 0) throw ConfigError("net.wtconv_kernel must be odd");
  if (mamba.d_model < 1 || mamba.d_state < 1 || mamba.d_conv < 1 || mamba.expand < 1) {
    throw ConfigError("mamba dimensions must be >= 1");
  }
}

void ResUnitParams::visit(const std::string& prefix, const ParamVisitor& f) {
  first.visit(join_name(prefix, "conv0"), f);
  second.visit(join_name(prefix, "conv1"), f);
}

void MsmParams::visit(const std::string& prefix, const ParamVisitor& f) {
  for (size_t i = 0; i < dilated.size(); ++i) dilated[i].visit(join_name(prefix, "dil" + std::to_string(i + 1)), f);
  fuse.visit(join_name(prefix, "fuse"), f);
}

MsmParams MsmParams::init(int64_t channels, Rng& rng) {
  MsmParams p;
  for (auto& d : p.dilated) d = init::conv(channels, channels, 3, rng, false, channels);
  p.fuse = init::conv(channels, channels, 1, rng);
  return p;
}

Tensor msm_standin(const Tensor& x, const MsmParams& p) {
  const int64_t C = x.dim(1);
  Tensor acc;
  for (int64_t d = 1; d <= 3; ++d) {
    Tensor y = conv2d(x, p.dilated[static_cast<size_t>(d - 1)].weight, {},
                      {.stride = 1, .pad = d, .dilation = d, .groups = C});
    acc = acc.defined() ? add(acc, y) : y;
  }
  return add(x, conv(acc, p.fuse, {}));
}

void CnnBlockParams::visit(const std::string& prefix, const ParamVisitor& f) {
  for (size_t i = 0; i < units.size(); ++i) units[i].visit(join_name(prefix, "res" + std::to_string(i)), f);
  if (use_mcam) mcam.visit(join_name(prefix, "mcam"), f);
  if (use_msm) msm.visit(join_name(prefix, "msm"), f);
}

Tensor cnn_block(const Tensor& x, const CnnBlockParams& p) {
  Tensor h = x;
  for (const auto& u : p.units) h = add(h, conv(relu(conv(h, u.first)), u.second));
  if (p.use_mcam) h = mcam_apply(h, p.mcam);
  if (p.use_msm) h = msm_standin(h, p.msm);
  return h;
}

void RestorationNet::visit(const std::string& prefix, const ParamVisitor& f) {
  for (size_t s = 0; s < 3; ++s) {
    const std::string idx = std::to_string(s);
    stems[s].visit(join_name(prefix, "stem" + idx), f);
    encoder[s].visit(join_name(prefix, "enc" + idx), f);
  }
  for (size_t s = 0; s < 2; ++s) {
    const std::string idx = std::to_string(s);
    down[s].visit(join_name(prefix, "down" + idx), f);
    join[s].visit(join_name(prefix, "join" + idx), f);
  }
  for (size_t s = 3; s-- > 0;) {
    const std::string idx = std::to_string(s);
    decoder[s].visit(join_name(prefix, "dec" + idx), f);
    if (s < 2) {
      up[s].visit(join_name(prefix, "up" + idx), f);
      skip_fuse[s].visit(join_name(prefix, "fuse" + idx), f);
    }
    heads[s].visit(join_name(prefix, "head" + idx), f);
  }
}

namespace {

CnnBlockParams make_block(const NetConfig& cfg, int64_t width, Rng& rng) {
  CnnBlockParams b;
  b.use_mcam = cfg.use_mcam;
  b.use_msm = cfg.use_msm;
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    ResUnitParams u;
    u.first = init::conv(width, width, 3, rng);
    u.second = init::conv(width, width, 3, rng);
    b.units.push_back(std::move(u));
  }
  if (cfg.use_mcam) b.mcam = McamParams::init(cfg.mamba, cfg.separate_mamba, rng);
  if (cfg.use_msm) b.msm = MsmParams::init(width, rng);
  return b;
}

}  // namespace

RestorationNet build(const NetConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  RestorationNet net;
  net.cfg = cfg;
  const int64_t C = cfg.channels;
  const std::array<int64_t, 3> widths{C, 2 * C, 4 * C};
  for (size_t s = 0; s < 3; ++s) {
    net.stems[s] = StemParams::init(3, widths[s], cfg.use_gmwt, cfg.wtconv_levels, cfg.wtconv_kernel, rng);
    net.encoder[s] = make_block(cfg, widths[s], rng);
  }
  for (size_t s = 0; s < 2; ++s) {
    net.down[s] = init::conv(widths[s], widths[s + 1], 3, rng);
    net.join[s] = init::conv(2 * widths[s + 1], widths[s + 1], 3, rng);
  }
  for (size_t s = 3; s-- > 0;) {
    net.decoder[s] = make_block(cfg, widths[s], rng);
    if (s < 2) {
      net.up[s] = init::conv(widths[s + 1], widths[s], 3, rng);
      net.skip_fuse[s] = init::conv(2 * widths[s], widths[s], 3, rng);
    }
    net.heads[s] = init::zero_conv(widths[s], 3, 3);
  }
  return net;
}

std::array<Tensor, 3> image_pyramid(const Tensor& img) {
  Tensor half = resize(img, ResizeMode::down2_bilinear);
  Tensor quarter = resize(half, ResizeMode::down2_bilinear);
  return {img, half, quarter};
}

NetOutputs forward(const RestorationNet& net, const Tensor& img) {
  if (img.ndim() != 4 || img.dim(1) != 3) {
    throw TensorError("forward expects [B,3,H,W], got " + shape_str(img.shape()));
  }
  const int64_t m = net.cfg.size_multiple();
  if (img.dim(2) % m || img.dim(3) % m) {
    throw TensorError("forward: H and W must be multiples of " + std::to_string(m) + ", got " +
                      shape_str(img.shape()));
  }
  const auto pyr = image_pyramid(img);

  // Encoder; lower-resolution stems join at the inputs of E2 and E3.
  std::array<Tensor, 3> enc;
  Tensor h = gmwtconvs_apply(pyr[0], net.stems[0]);
  enc[0] = cnn_block(h, net.encoder[0]);
  for (size_t s = 1; s < 3; ++s) {
    Tensor d = relu(conv(enc[s - 1], net.down[s - 1], {.stride = 2, .pad = 1}));
    Tensor stem = gmwtconvs_apply(pyr[s], net.stems[s]);
    h = relu(conv(concat({d, stem}, 1), net.join[s - 1]));
    enc[s] = cnn_block(h, net.encoder[s]);
  }

  // Decoder with one image-level output per scale.
  std::array<Tensor, 3> outs;
  Tensor g = cnn_block(enc[2], net.decoder[2]);
  outs[2] = add(conv(g, net.heads[2]), pyr[2]);
  for (size_t s = 2; s-- > 0;) {
    Tensor u = relu(conv(resize(g, ResizeMode::up2_bilinear), net.up[s]));
    h = relu(conv(concat({u, enc[s]}, 1), net.skip_fuse[s]));
    g = cnn_block(h, net.decoder[s]);
    outs[s] = add(conv(g, net.heads[s]), pyr[s]);
  }
  return NetOutputs{outs[0], outs[1], outs[2]};
}

int64_t parameter_count(const RestorationNet& net) { return count_parameters(net); }

std::vector<ManifestEntry> manifest(const RestorationNet& net) {
  std::vector<ManifestEntry> out;
  RestorationNet copy = net;
  copy.visit("", [&](const std::string& name, Tensor& t) { out.push_back({name, t.shape()}); });
  return out;
}

int64_t estimate_macs(const RestorationNet& net, int64_t height, int64_t width) {
  MacCounter::reset();
  forward(net, Tensor::zeros({1, 3, height, width}));
  return MacCounter::value();
}

}  // namespace wama::nn
