#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wama {

#ifdef WAMAIR_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Raised for contract violations in tensor ops (bad shapes, dead tapes, ...).
class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TapeImpl;

/// Dense row-major N-D array. Values are immutable once the tensor is shared
/// with a tape; `requires_grad` tensors are bound to exactly one tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor scalar(Real value);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  /// Negative axes count from the back.
  int64_t dim(int64_t axis) const;
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  std::span<const Real> data() const { return {data_->data(), data_->size()}; }
  const Real* ptr() const { return data_->data(); }
  Real item() const;
  Real at(std::initializer_list<int64_t> index) const;

  /// Writable view. Refuses tensors that are recorded on a live tape.
  std::span<Real> mutable_data();

  bool requires_grad() const { return node_ >= 0 && !tape_.expired(); }
  std::optional<int> tape_node() const;
  /// Same values, no tape binding.
  Tensor detach() const;
  /// Deep copy of the values.
  Tensor clone() const;

  /// Reinterprets the values with a new shape, no autodiff recording.
  Tensor reshaped_detached(Shape shape) const;

 private:
  friend class Tape;
  friend struct TapeAccess;

  Shape shape_;
  std::shared_ptr<std::vector<Real>> data_;
  std::weak_ptr<TapeImpl> tape_;
  int node_ = -1;
};

/// Gradients produced by one backward pass, indexed by tape node.
class Gradients {
 public:
  bool has(const Tensor& leaf) const;
  /// Throws when the tensor received no gradient.
  const Tensor& of(const Tensor& leaf) const;

 private:
  friend Gradients backward(const Tensor& loss);
  std::vector<std::optional<Tensor>> by_node_;
  std::weak_ptr<TapeImpl> tape_;
};

/// Backward rule of a recorded op: receives the incoming gradient and a mask
/// telling which inputs need one; returns one entry per input (undefined
/// tensors for inputs that need none).
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& needs)>;

/// Reverse-mode autodiff tape. Nodes are stored in creation order, which is a
/// topological order; backward walks them once in reverse. A tape is confined
/// to a single thread.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;

  /// Registers `value` as a differentiable leaf. The returned tensor shares
  /// storage with `value`.
  Tensor watch(const Tensor& value);

  Gradients backward(const Tensor& loss) const;

  size_t size() const;

 private:
  std::shared_ptr<TapeImpl> impl_;
};

/// Runs reverse mode from a scalar loss on whatever tape produced it. Fails
/// when the tape has been destroyed.
Gradients backward(const Tensor& loss);

/// Hook used by op implementations: records `out` as the result of `op`
/// applied to `inputs` when at least one input requires a gradient, and
/// returns it (bound to the tape) or unchanged otherwise.
Tensor record(std::string_view op, std::initializer_list<Tensor> inputs, Tensor out,
              BackwardFn backward);
Tensor record(std::string_view op, const std::vector<Tensor>& inputs, Tensor out,
              BackwardFn backward);

bool any_requires_grad(std::initializer_list<Tensor> inputs);

/// Op-kind name of the node a tensor was produced by ("leaf" for watched
/// tensors), or empty when the tensor is not on a tape.
std::string_view producing_op(const Tensor& t);

}  // namespace wama
