#pragma once

#include <array>
#include <vector>

#include "wamair/tensor.hpp"

namespace wama::wavelet {

enum class Band { ll = 0, lh = 1, hl = 2, hh = 3 };

/// The four orthonormal Haar subbands of one decomposition level. Naming:
/// LH is low-pass along rows and high-pass along columns, so it responds to
/// vertical intensity changes (horizontal stripes); HL is the transpose case.
struct SubbandSet {
  Tensor ll, lh, hl, hh;
  int level = 1;

  const Tensor& band(Band b) const;
};

/// Analysis of x: [B,C,H,W] into [B,C,4,H/2,W/2], bands ordered LL, LH, HL, HH.
/// For every 2x2 block [[a,b],[c,d]]:
///   LL = (a+b+c+d)/2, LH = (a+b-c-d)/2, HL = (a-b+c-d)/2, HH = (a-b-c+d)/2.
Tensor dwt2_stacked(const Tensor& x);
/// Exact inverse of dwt2_stacked. s: [B,C,4,h,w] -> [B,C,2h,2w].
Tensor idwt2_stacked(const Tensor& s);

SubbandSet dwt2(const Tensor& x);
Tensor idwt2(const SubbandSet& s);

/// Recursive decomposition of the LL band; index 0 is the finest level.
std::vector<SubbandSet> dwt2_multi(const Tensor& x, int levels);
/// Rebuilds the input of dwt2_multi from its output.
Tensor idwt2_multi(const std::vector<SubbandSet>& levels);

}  // namespace wama::wavelet
