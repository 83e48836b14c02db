#include "wamair/wavelet.hpp"

#include "wamair/ops.hpp"

namespace wama::wavelet {

namespace {

constexpr Real kHalf = Real(0.5);

// Forward and inverse share one butterfly: the 4x4 Haar matrix scaled by 1/2
// is symmetric and orthogonal, so it is its own inverse and its own adjoint.
void butterfly(Real a, Real b, Real c, Real d, Real& o0, Real& o1, Real& o2, Real& o3) {
  o0 = (a + b + c + d) * kHalf;
  o1 = (a + b - c - d) * kHalf;
  o2 = (a - b + c - d) * kHalf;
  o3 = (a - b - c + d) * kHalf;
}

// [P,H,W] -> [P,4,H/2,W/2]
std::vector<Real> analyze(const Real* x, int64_t planes, int64_t H, int64_t W) {
  const int64_t h = H / 2, w = W / 2, q = h * w;
  std::vector<Real> out(static_cast<size_t>(planes * 4 * q));
  for (int64_t p = 0; p < planes; ++p) {
    const Real* s = x + p * H * W;
    Real* d = out.data() + p * 4 * q;
    for (int64_t i = 0; i < h; ++i) {
      const Real* r0 = s + 2 * i * W;
      const Real* r1 = r0 + W;
      for (int64_t j = 0; j < w; ++j) {
        const int64_t k = i * w + j;
        butterfly(r0[2 * j], r0[2 * j + 1], r1[2 * j], r1[2 * j + 1], d[k], d[q + k], d[2 * q + k], d[3 * q + k]);
      }
    }
  }
  return out;
}

// [P,4,h,w] -> [P,2h,2w]
std::vector<Real> synthesize(const Real* s, int64_t planes, int64_t h, int64_t w) {
  const int64_t H = 2 * h, W = 2 * w, q = h * w;
  std::vector<Real> out(static_cast<size_t>(planes * H * W));
  for (int64_t p = 0; p < planes; ++p) {
    const Real* src = s + p * 4 * q;
    Real* d = out.data() + p * H * W;
    for (int64_t i = 0; i < h; ++i) {
      Real* r0 = d + 2 * i * W;
      Real* r1 = r0 + W;
      for (int64_t j = 0; j < w; ++j) {
        const int64_t k = i * w + j;
        butterfly(src[k], src[q + k], src[2 * q + k], src[3 * q + k], r0[2 * j], r0[2 * j + 1], r1[2 * j],
                  r1[2 * j + 1]);
      }
    }
  }
  return out;
}

}  // namespace

const Tensor& SubbandSet::band(Band b) const {
  switch (b) {
    case Band::ll: return ll;
    case Band::lh: return lh;
    case Band::hl: return hl;
    case Band::hh: return hh;
  }
  return ll;
}

Tensor dwt2_stacked(const Tensor& x) {
  if (x.ndim() != 4) throw TensorError("dwt2 expects [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw TensorError("dwt2 needs even H and W, got " + shape_str(x.shape()));
  Tensor y({B, C, 4, H / 2, W / 2}, analyze(x.ptr(), B * C, H, W));
  Shape from = x.shape();
  return record("dwt2", {x}, y, [from, B, C, H, W](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{Tensor(from, synthesize(g.ptr(), B * C, H / 2, W / 2))};
  });
}

Tensor idwt2_stacked(const Tensor& s) {
  if (s.ndim() != 5 || s.dim(2) != 4) throw TensorError("idwt2 expects [B,C,4,h,w], got " + shape_str(s.shape()));
  const int64_t B = s.dim(0), C = s.dim(1), h = s.dim(3), w = s.dim(4);
  Tensor y({B, C, 2 * h, 2 * w}, synthesize(s.ptr(), B * C, h, w));
  Shape from = s.shape();
  return record("idwt2", {s}, y, [from, B, C, h, w](const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{Tensor(from, analyze(g.ptr(), B * C, 2 * h, 2 * w))};
  });
}

SubbandSet dwt2(const Tensor& x) {
  Tensor s = dwt2_stacked(x);
  Shape bs{s.dim(0), s.dim(1), s.dim(3), s.dim(4)};
  auto pick = [&](int64_t b) { return reshape(slice(s, 2, b, 1), bs); };
  return SubbandSet{pick(0), pick(1), pick(2), pick(3), 1};
}

Tensor idwt2(const SubbandSet& s) {
  const Shape& ref = s.ll.shape();
  for (const Tensor* t : {&s.lh, &s.hl, &s.hh}) {
    if (t->shape() != ref) {
      throw TensorError("idwt2: subband shapes differ: " + shape_str(ref) + " vs " + shape_str(t->shape()));
    }
  }
  if (ref.size() != 4) throw TensorError("idwt2: subbands must be [B,C,h,w]");
  Shape one{ref[0], ref[1], 1, ref[2], ref[3]};
  Tensor stacked = concat({reshape(s.ll, one), reshape(s.lh, one), reshape(s.hl, one), reshape(s.hh, one)}, 2);
  return idwt2_stacked(stacked);
}

std::vector<SubbandSet> dwt2_multi(const Tensor& x, int levels) {
  if (levels < 1) throw TensorError("dwt2_multi: levels must be >= 1");
  const int64_t m = int64_t{1} << levels;
  if (x.ndim() != 4 || x.dim(2) % m || x.dim(3) % m) {
    throw TensorError("dwt2_multi: spatial dims of " + shape_str(x.shape()) + " must be divisible by " +
                      std::to_string(m));
  }
  std::vector<SubbandSet> out;
  Tensor cur = x;
  for (int l = 1; l <= levels; ++l) {
    SubbandSet s = dwt2(cur);
    s.level = l;
    cur = s.ll;
    out.push_back(std::move(s));
  }
  return out;
}

Tensor idwt2_multi(const std::vector<SubbandSet>& levels) {
  if (levels.empty()) throw TensorError("idwt2_multi: no levels");
  Tensor ll = levels.back().ll;
  for (size_t k = levels.size(); k-- > 0;) {
    SubbandSet s = levels[k];
    s.ll = ll;
    ll = idwt2(s);
  }
  return ll;
}

}  // namespace wama::wavelet
