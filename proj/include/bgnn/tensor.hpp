#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bgnn {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Node shared between tensor handles and tape closures. Holds the value
// buffer and, once backward has touched it, a same-shape gradient buffer.
struct TensorNode {
  Shape shape;
  std::vector<double> data;  // row-major
  std::vector<double> grad;  // empty means "no gradient accumulated yet"
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Shared handle to a TensorNode; copies alias the same node. All entries are
// float64 and must be finite on creation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->data.size()); }
  int rows() const;  // 2-d only
  int cols() const;  // 2-d only
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }

  double operator[](std::int64_t i) const { return node_->data[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const;       // 2-d accessor
  double value() const;                // scalar tensors only
  double grad_at(std::int64_t i) const;

  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  // Deep copy of the value buffer into a fresh node (gradient not copied).
  Tensor clone(bool requires_grad) const;
  Tensor detach() const { return clone(false); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
};

// Records the primitive applications of one forward pass, in execution
// order. Reverse replay is a valid reverse-topological traversal, so the
// backward pass visits each recorded node exactly once.
class Tape {
 public:
  void record(std::function<void()> backward_step) { steps_.push_back(std::move(backward_step)); }

  // Seeds d(loss) = 1 and replays the tape in reverse, accumulating into the
  // grad buffers of every tensor that requires gradients. loss must be a
  // scalar. A loss that depends on no parameter is a no-op.
  void backward(const Tensor& loss);

  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;
};

}  // namespace bgnn
