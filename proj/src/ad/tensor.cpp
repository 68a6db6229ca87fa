#include "pdet/ad/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "pdet/core/error.hpp"
#include "pdet/kernels/kernels.hpp"

namespace pdet::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorImpl::accumulate(std::span<const double> g) {
  if (!requires_grad) return;
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  kernels::active().axpy(1.0, g.data(), grad.data(), g.size());
}

double* TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (ad::numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                     std::to_string(ad::numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::int64_t axis) const {
  const auto n = static_cast<std::int64_t>(ndim());
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != ndim()) throw ShapeError("at(): rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape()[axis]) throw ShapeError("at(): index out of range");
    off = off * shape()[axis] + i;
    ++axis;
  }
  return impl_->data[off];
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::clear() {
  for (auto& n : nodes_) n.output->node_id = -1;
  nodes_.clear();
}

Tensor Tape::record(const char* tag, Shape shape, std::vector<double> data,
                    std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return record(tag, std::move(shape), std::move(data),
                std::vector<Tensor>(inputs), std::move(backward));
}

Tensor Tape::record(const char* tag, Shape shape, std::vector<double> data,
                    const std::vector<Tensor>& inputs, BackwardFn backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(data), false);
  if (!recording()) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.impl()->requires_grad = true;
  out.impl()->node_id = static_cast<std::int64_t>(nodes_.size());
  Node node{tag, {}, out.shared(), std::move(backward)};
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs) node.inputs.push_back(t.shared());
  nodes_.push_back(std::move(node));
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  TensorImpl* root = loss.impl();
  if (root->is_leaf()) {
    root->accumulate(std::vector<double>{1.0});
    return;
  }
  Tape& tape = Tape::current();
  const auto last = static_cast<std::size_t>(root->node_id);
  if (last >= tape.nodes_.size() || tape.nodes_[last].output.get() != root) {
    throw Error("backward(): loss does not belong to this thread's tape");
  }
  for (std::size_t i = 0; i <= last; ++i) tape.nodes_[i].output->grad.clear();
  root->grad.assign(1, 1.0);
  for (std::size_t i = last + 1; i-- > 0;) {
    const Node& node = tape.nodes_[i];
    if (node.output->grad.empty()) continue;
    node.backward(*node.output);
  }
}

}  // namespace pdet::ad
