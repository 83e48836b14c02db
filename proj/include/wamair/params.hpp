#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wamair/rng.hpp"
#include "wamair/tensor.hpp"

namespace wama {

/// Called once per parameter tensor with its dotted name; may replace the
/// tensor (used to bind parameters to a tape or load them from disk).
using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

/// Plain 2-D convolution weights with optional bias.
struct ConvParams {
  Tensor weight;  // [Cout, Cin/groups, k, k]
  Tensor bias;    // [Cout] or undefined

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(join_name(prefix, "weight"), weight);
    if (bias.defined()) f(join_name(prefix, "bias"), bias);
  }
};

namespace init {

Tensor uniform(Shape shape, Real bound, Rng& rng);
Tensor normal(Shape shape, Real stddev, Rng& rng);

/// Weight ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); same bound for the bias.
ConvParams conv(int64_t cin, int64_t cout, int64_t k, Rng& rng, bool with_bias = true, int64_t groups = 1);
ConvParams zero_conv(int64_t cin, int64_t cout, int64_t k, bool with_bias = true);

}  // namespace init

/// Total number of scalar entries across the parameters of `p`.
template <class P>
int64_t count_parameters(P p) {
  int64_t n = 0;
  p.visit("", [&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

template <class P>
std::vector<std::string> parameter_names(P p) {
  std::vector<std::string> names;
  p.visit("", [&](const std::string& name, Tensor&) { names.push_back(name); });
  return names;
}

/// Returns a copy of `p` whose tensors are watched leaves on `tape`.
template <class P>
P watched(P p, Tape& tape) {
  p.visit("", [&](const std::string&, Tensor& t) { t = tape.watch(t); });
  return p;
}

}  // namespace wama
