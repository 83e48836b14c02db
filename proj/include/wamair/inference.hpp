#pragma once

#include <array>

#include "wamair/net.hpp"

namespace wama::infer {

/// Full-resolution restoration of one image [3,H,W] (or [1,3,H,W]). Sizes
/// that are not a multiple of the network's requirement are edge-padded on
/// the bottom and right, then cropped back. Output is [3,H,W], clamped to [0,1].
Tensor restore_image(const nn::RestorationNet& net, const Tensor& img);

/// Display images of the Haar subbands at `level` (LL, LH, HL, HH), each
/// [3,H/2^level,W/2^level] in [0,1]. LL is divided by 2^level so it stays in
/// range; detail bands map 0 to 0.5 with a symmetric range set by the band's
/// largest magnitude.
std::array<Tensor, 4> subband_images(const Tensor& img, int level);

inline constexpr std::array<const char*, 4> kBandNames = {"ll", "lh", "hl", "hh"};

}  // namespace wama::infer
