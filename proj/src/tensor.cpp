#include "bgnn/tensor.hpp"

#include <cmath>

#include "bgnn/error.hpp"

namespace bgnn {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw Error::dimension("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw Error::dimension("tensor shape must have rank >= 1");
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(data.size()) != n) {
    throw Error::dimension("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw Error::domain("non-finite entry in tensor data");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                   requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                   requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

int Tensor::rows() const {
  if (shape().size() != 2) throw Error::dimension("rows(): tensor is not 2-d");
  return shape()[0];
}

int Tensor::cols() const {
  if (shape().size() != 2) throw Error::dimension("cols(): tensor is not 2-d");
  return shape()[1];
}

double Tensor::at(int r, int c) const {
  return node_->data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                     static_cast<std::size_t>(c)];
}

double Tensor::value() const {
  if (size() != 1) throw Error::dimension("value(): tensor is not scalar");
  return node_->data[0];
}

double Tensor::grad_at(std::int64_t i) const {
  if (node_->grad.empty()) return 0.0;
  return node_->grad[static_cast<std::size_t>(i)];
}

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(node_->shape, node_->data, requires_grad);
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw Error::dimension("backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace bgnn
