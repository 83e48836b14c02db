#include "wamair/params.hpp"

#include <cmath>

namespace wama::init {

Tensor uniform(Shape shape, Real bound, Rng& rng) {
  std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor(std::move(shape), std::move(v));
}

Tensor normal(Shape shape, Real stddev, Rng& rng) {
  std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.normal(0.0, stddev));
  return Tensor(std::move(shape), std::move(v));
}

ConvParams conv(int64_t cin, int64_t cout, int64_t k, Rng& rng, bool with_bias, int64_t groups) {
  const int64_t fan_in = cin / groups * k * k;
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(fan_in));
  ConvParams p;
  p.weight = uniform({cout, cin / groups, k, k}, bound, rng);
  if (with_bias) p.bias = uniform({cout}, bound, rng);
  return p;
}

ConvParams zero_conv(int64_t cin, int64_t cout, int64_t k, bool with_bias) {
  ConvParams p;
  p.weight = Tensor::zeros({cout, cin, k, k});
  if (with_bias) p.bias = Tensor::zeros({cout});
  return p;
}

}  // namespace wama::init
