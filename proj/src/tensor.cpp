#include "wamair/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace wama {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& s) {
  for (auto d : s) {
    if (d < 1) throw TensorError("tensor dims must be >= 1, got " + shape_str(s));
  }
}

}  // namespace

struct TapeNode {
  std::string_view op;
  std::vector<int> inputs;
  Shape shape;
  BackwardFn backward;
};

struct TapeImpl {
  std::vector<TapeNode> nodes;
};

Tensor::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)) {
  check_shape(shape_);
  if (shape_numel(shape_) != static_cast<int64_t>(values.size())) {
    throw TensorError("shape " + shape_str(shape_) + " does not match " +
                      std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<std::vector<Real>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Real(0)); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), Real(1)); }

Tensor Tensor::full(Shape shape, Real value) {
  check_shape(shape);
  auto n = static_cast<size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<Real>(n, value));
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, {value}); }

int64_t Tensor::dim(int64_t axis) const {
  int64_t n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw TensorError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

Real Tensor::item() const {
  if (numel() != 1) throw TensorError("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

Real Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int64_t>(index.size()) != ndim()) {
    throw TensorError("index rank mismatch for " + shape_str(shape_));
  }
  int64_t off = 0;
  size_t i = 0;
  for (auto v : index) {
    if (v < 0 || v >= shape_[i]) throw TensorError("index out of range for " + shape_str(shape_));
    off = off * shape_[i] + v;
    ++i;
  }
  return (*data_)[static_cast<size_t>(off)];
}

std::span<Real> Tensor::mutable_data() {
  if (requires_grad()) throw TensorError("in-place mutation of a tensor recorded on a live tape");
  return {data_->data(), data_->size()};
}

std::optional<int> Tensor::tape_node() const {
  if (!requires_grad()) return std::nullopt;
  return node_;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::clone() const {
  if (!defined()) return {};
  return Tensor(shape_, *data_);
}

Tensor Tensor::reshaped_detached(Shape shape) const {
  check_shape(shape);
  if (shape_numel(shape) != numel()) {
    throw TensorError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

struct TapeAccess {
  static std::shared_ptr<TapeImpl> tape_of(const Tensor& t) { return t.tape_.lock(); }
  static int node_of(const Tensor& t) { return t.node_; }
  static void bind(Tensor& t, const std::shared_ptr<TapeImpl>& tape, int node) {
    t.tape_ = tape;
    t.node_ = node;
  }
};

bool Gradients::has(const Tensor& leaf) const {
  auto tape = TapeAccess::tape_of(leaf);
  if (!tape || tape != tape_.lock()) return false;
  auto n = TapeAccess::node_of(leaf);
  return n >= 0 && static_cast<size_t>(n) < by_node_.size() && by_node_[n].has_value();
}

const Tensor& Gradients::of(const Tensor& leaf) const {
  if (!has(leaf)) throw TensorError("no gradient recorded for tensor " + shape_str(leaf.shape()));
  return *by_node_[static_cast<size_t>(TapeAccess::node_of(leaf))];
}

Tape::Tape() : impl_(std::make_shared<TapeImpl>()) {}
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

size_t Tape::size() const { return impl_ ? impl_->nodes.size() : 0; }

Tensor Tape::watch(const Tensor& value) {
  if (!value.defined()) throw TensorError("watch() on undefined tensor");
  if (value.requires_grad()) throw TensorError("tensor already participates in a tape");
  Tensor t = value.detach();
  impl_->nodes.push_back(TapeNode{"leaf", {}, t.shape(), nullptr});
  TapeAccess::bind(t, impl_, static_cast<int>(impl_->nodes.size() - 1));
  return t;
}

namespace {

void accumulate(std::optional<Tensor>& slot, const Tensor& g, const Shape& expect) {
  if (g.numel() != shape_numel(expect)) {
    throw TensorError("gradient shape " + shape_str(g.shape()) + " does not match " +
                      shape_str(expect));
  }
  if (!slot) {
    slot = Tensor(expect, std::vector<Real>(g.data().begin(), g.data().end()));
    return;
  }
  auto dst = slot->mutable_data();
  auto src = g.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Gradients Tape::backward(const Tensor& loss) const {
  if (TapeAccess::tape_of(loss) != impl_) throw TensorError("loss belongs to a different tape");
  return wama::backward(loss);
}

Gradients backward(const Tensor& loss) {
  if (!loss.defined()) throw TensorError("backward() on undefined tensor");
  auto impl = TapeAccess::tape_of(loss);
  if (TapeAccess::node_of(loss) < 0 || !impl) {
    throw TensorError("backward() needs a loss on a live tape");
  }
  if (loss.numel() != 1) throw TensorError("backward() needs a scalar loss, got " + shape_str(loss.shape()));

  const auto& nodes = impl->nodes;
  Gradients out;
  out.tape_ = impl;
  out.by_node_.assign(nodes.size(), std::nullopt);
  auto root = static_cast<size_t>(TapeAccess::node_of(loss));
  out.by_node_[root] = Tensor::ones(nodes[root].shape);

  for (size_t k = root + 1; k-- > 0;) {
    const auto& node = nodes[k];
    if (!node.backward || !out.by_node_[k]) continue;
    std::vector<bool> needs(node.inputs.size());
    for (size_t i = 0; i < node.inputs.size(); ++i) needs[i] = node.inputs[i] >= 0;
    auto grads = node.backward(*out.by_node_[k], needs);
    for (size_t i = 0; i < node.inputs.size(); ++i) {
      int in = node.inputs[i];
      if (in < 0 || i >= grads.size() || !grads[i].defined()) continue;
      accumulate(out.by_node_[static_cast<size_t>(in)], grads[i], nodes[static_cast<size_t>(in)].shape);
    }
    // Interior nodes keep their gradient only if they are leaves.
    if (node.op != "leaf") out.by_node_[k].reset();
  }
  return out;
}

bool any_requires_grad(std::initializer_list<Tensor> inputs) {
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

Tensor record(std::string_view op, const std::vector<Tensor>& inputs, Tensor out,
              BackwardFn backward) {
  std::shared_ptr<TapeImpl> tape;
  std::vector<int> ids(inputs.size(), -1);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const auto& t = inputs[i];
    if (!t.defined() || !t.requires_grad()) continue;
    auto tp = TapeAccess::tape_of(t);
    if (tape && tp != tape) throw TensorError(std::string(op) + ": inputs live on different tapes");
    tape = tp;
    ids[i] = TapeAccess::node_of(t);
  }
  if (!tape) return out;
  tape->nodes.push_back(TapeNode{op, std::move(ids), out.shape(), std::move(backward)});
  TapeAccess::bind(out, tape, static_cast<int>(tape->nodes.size() - 1));
  return out;
}

Tensor record(std::string_view op, std::initializer_list<Tensor> inputs, Tensor out,
              BackwardFn backward) {
  return record(op, std::vector<Tensor>(inputs), std::move(out), std::move(backward));
}

std::string_view producing_op(const Tensor& t) {
  auto tape = TapeAccess::tape_of(t);
  if (!tape || TapeAccess::node_of(t) < 0) return {};
  return tape->nodes[static_cast<size_t>(TapeAccess::node_of(t))].op;
}

}  // namespace wama
