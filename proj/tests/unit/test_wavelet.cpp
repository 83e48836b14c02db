#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "wamair/ops.hpp"
#include "wamair/wavelet.hpp"

using namespace wama;
using namespace wama::testing;
namespace wv = wama::wavelet;

namespace {

double energy(const Tensor& t) {
  double e = 0;
  for (auto v : t.data()) e += static_cast<double>(v) * v;
  return e;
}

double energy(const wv::SubbandSet& s) { return energy(s.ll) + energy(s.lh) + energy(s.hl) + energy(s.hh); }

double dot(const Tensor& a, const Tensor& b) {
  double d = 0;
  for (int64_t i = 0; i < a.numel(); ++i) d += static_cast<double>(a.ptr()[i]) * b.ptr()[i];
  return d;
}

wv::SubbandSet random_set(Shape shape, Rng& rng) {
  wv::SubbandSet s;
  s.ll = random_tensor(shape, rng);
  s.lh = random_tensor(shape, rng);
  s.hl = random_tensor(shape, rng);
  s.hh = random_tensor(shape, rng);
  return s;
}

}  // namespace

TEST(Dwt2, ConstantBlock) {
  auto s = wv::dwt2(Tensor::ones({1, 1, 2, 2}));
  EXPECT_DOUBLE_EQ(s.ll.item(), 2);
  EXPECT_DOUBLE_EQ(s.lh.item(), 0);
  EXPECT_DOUBLE_EQ(s.hl.item(), 0);
  EXPECT_DOUBLE_EQ(s.hh.item(), 0);
}

TEST(Dwt2, HorizontalStripeLandsInLh) {
  auto s = wv::dwt2(Tensor({1, 1, 2, 2}, {1, 1, 0, 0}));
  EXPECT_DOUBLE_EQ(s.ll.item(), 1);
  EXPECT_DOUBLE_EQ(s.lh.item(), 1);
  EXPECT_DOUBLE_EQ(s.hl.item(), 0);
  EXPECT_DOUBLE_EQ(s.hh.item(), 0);
}

TEST(Dwt2, AllFourFormulas) {
  const Real a = 1, b = 2, c = 4, d = 8;
  auto s = wv::dwt2(Tensor({1, 1, 2, 2}, {a, b, c, d}));
  EXPECT_DOUBLE_EQ(s.ll.item(), (a + b + c + d) / 2);
  EXPECT_DOUBLE_EQ(s.lh.item(), (a + b - c - d) / 2);
  EXPECT_DOUBLE_EQ(s.hl.item(), (a - b + c - d) / 2);
  EXPECT_DOUBLE_EQ(s.hh.item(), (a - b - c + d) / 2);
  EXPECT_EQ(s.level, 1);
  EXPECT_EQ(s.band(wv::Band::hl).item(), s.hl.item());
}

TEST(Dwt2, EnergyPreserved) {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  EXPECT_NEAR(energy(wv::dwt2(x)), energy(x), 1e-12 * energy(x));
}

TEST(Dwt2, OddSizeRejected) {
  EXPECT_THROW(wv::dwt2(Tensor::ones({1, 1, 3, 4})), TensorError);
  EXPECT_THROW(wv::dwt2(Tensor::ones({1, 1, 4, 5})), TensorError);
}

TEST(Dwt2, VerticallyVaryingImageHasLhOnly) {
  std::vector<Real> v(64);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) v[static_cast<size_t>(i * 8 + j)] = static_cast<Real>(i * i) * Real(0.1);
  auto s = wv::dwt2(Tensor({1, 1, 8, 8}, v));
  EXPECT_GT(max_abs(s.lh), 0.1);
  EXPECT_EQ(max_abs(s.hl), 0);
  EXPECT_EQ(max_abs(s.hh), 0);
}

TEST(Idwt2, InverseOfExamples) {
  wv::SubbandSet s;
  s.ll = Tensor::full({1, 1, 1, 1}, 2);
  s.lh = s.hl = s.hh = Tensor::zeros({1, 1, 1, 1});
  Tensor x = wv::idwt2(s);
  for (auto v : x.data()) EXPECT_DOUBLE_EQ(v, 1);
}

TEST(Idwt2, PerfectReconstruction) {
  Rng rng(2);
  Tensor x = random_tensor({1, 2, 16, 16}, rng);
  EXPECT_LE(max_abs_diff(wv::idwt2(wv::dwt2(x)), x), 1e-12);
}

TEST(Idwt2, Linearity) {
  Rng rng(3);
  auto s = random_set({1, 2, 4, 4}, rng), t = random_set({1, 2, 4, 4}, rng);
  wv::SubbandSet st{add(s.ll, t.ll), add(s.lh, t.lh), add(s.hl, t.hl), add(s.hh, t.hh), 1};
  EXPECT_LE(max_abs_diff(wv::idwt2(st), add(wv::idwt2(s), wv::idwt2(t))), 1e-12);
}

TEST(Idwt2, MismatchedSubbandsRejected) {
  wv::SubbandSet s;
  s.ll = s.lh = s.hl = Tensor::zeros({1, 1, 2, 2});
  s.hh = Tensor::zeros({1, 1, 2, 3});
  EXPECT_THROW(wv::idwt2(s), TensorError);
}

TEST(Dwt2, AdjointOfIdwt2) {
  Rng rng(4);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  Tensor s = random_tensor({2, 3, 4, 4, 4}, rng);
  EXPECT_NEAR(dot(wv::dwt2_stacked(x), s), dot(x, wv::idwt2_stacked(s)), 1e-10);
}

TEST(DwtMulti, OneLevelEqualsDwt2) {
  Rng rng(5);
  Tensor x = random_tensor({1, 2, 8, 8}, rng);
  auto m = wv::dwt2_multi(x, 1);
  auto s = wv::dwt2(x);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(max_abs_diff(m[0].ll, s.ll), 0);
  EXPECT_EQ(max_abs_diff(m[0].hh, s.hh), 0);
}

TEST(DwtMulti, SecondLevelIsRecursive) {
  Rng rng(6);
  Tensor x = random_tensor({1, 1, 8, 8}, rng);
  auto m = wv::dwt2_multi(x, 2);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[1].level, 2);
  EXPECT_EQ(max_abs_diff(m[1].ll, wv::dwt2(wv::dwt2(x).ll).ll), 0);
}

TEST(DwtMulti, CoefficientCountEqualsPixels) {
  Rng rng(7);
  Tensor x = random_tensor({1, 1, 16, 16}, rng);
  for (int levels = 1; levels <= 3; ++levels) {
    auto m = wv::dwt2_multi(x, levels);
    int64_t n = m.back().ll.numel();
    for (const auto& s : m) n += s.lh.numel() + s.hl.numel() + s.hh.numel();
    EXPECT_EQ(n, 256);
  }
}

TEST(DwtMulti, PerfectReconstructionAtEveryLevel) {
  Rng rng(8);
  Tensor x = random_tensor({2, 3, 32, 32}, rng);
  for (int levels = 1; levels <= 3; ++levels) {
    EXPECT_LE(max_abs_diff(wv::idwt2_multi(wv::dwt2_multi(x, levels)), x), 1e-10 * max_abs(x));
  }
}

TEST(DwtMulti, InsufficientDivisibilityRejected) {
  EXPECT_THROW(wv::dwt2_multi(Tensor::ones({1, 1, 12, 12}), 3), TensorError);
  EXPECT_THROW(wv::dwt2_multi(Tensor::ones({1, 1, 8, 8}), 0), TensorError);
}

TEST(Dwt2, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  Tensor wgt = random_tensor({1, 2, 4, 2, 2}, rng);
  LossFn f = [wgt](const std::vector<Tensor>& t) { return sum(mul(wv::dwt2_stacked(t[0]), wgt)); };
  EXPECT_LE(gradcheck(f, {random_tensor({1, 2, 4, 4}, rng)}), 1e-6);
  LossFn g = [](const std::vector<Tensor>& t) {
    Tensor y = wv::idwt2_stacked(t[0]);
    return sum(mul(y, y));
  };
  EXPECT_LE(gradcheck(g, {random_tensor({1, 2, 4, 2, 2}, rng)}), 1e-6);
  LossFn h = [](const std::vector<Tensor>& t) {
    auto s = wv::dwt2(t[0]);
    return add(sum(mul(s.lh, s.lh)), sum(mul(s.ll, s.hh)));
  };
  EXPECT_LE(gradcheck(h, {random_tensor({1, 1, 4, 4}, rng)}), 1e-6);
}
