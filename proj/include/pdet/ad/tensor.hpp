#pragma once

// Dense float64 tensors with a dynamic, per-thread reverse-mode tape.
//
// Every op whose inputs require gradients appends one node to the calling
// thread's tape. backward() walks that tape in strict reverse append order.
// Leaves (weights, inputs) accumulate gradients across backward calls until
// zero_grad(); intermediate gradients live only for one backward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pdet::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::int64_t node_id = -1;  // -1 for leaves

  bool is_leaf() const { return node_id < 0; }
  // Adds g into grad, allocating on first use. No-op unless requires_grad.
  void accumulate(std::span<const double> g);
  double* grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  // Negative axes count from the back.
  std::size_t dim(std::int64_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Writable view for initializers and optimizers; never use on tensors that
  // participate in a live graph.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  std::int64_t node_id() const { return impl_->node_id; }
  // Same values, no history.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
  const char* tag;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  BackwardFn backward;
};

class Tape {
 public:
  static Tape& current();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  void clear();
  bool recording() const { return recording_ > 0; }

  // Builds the result tensor and, if any input requires grad, records it.
  Tensor record(const char* tag, Shape shape, std::vector<double> data,
                std::initializer_list<Tensor> inputs, BackwardFn backward);
  Tensor record(const char* tag, Shape shape, std::vector<double> data,
                const std::vector<Tensor>& inputs, BackwardFn backward);

 private:
  friend class NoGradGuard;
  friend void backward(const Tensor& loss);
  std::vector<Node> nodes_;
  int recording_ = 1;
};

// Disables recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { --Tape::current().recording_; }
  ~NoGradGuard() { ++Tape::current().recording_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Clears this thread's tape on scope exit.
class TapeScope {
 public:
  TapeScope() = default;
  ~TapeScope() { Tape::current().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

// loss must be a single-element tensor. Every requires_grad leaf reachable
// from it receives d(loss)/d(leaf), added to any existing gradient.
void backward(const Tensor& loss);

}  // namespace pdet::ad
