#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "cpgan/common.hpp"
#include "cpgan/random.hpp"

namespace cpgan {

using Shape = std::vector<index_t>;

inline index_t shape_numel(const Shape& s) {
  index_t n = 1;
  for (index_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // allocated only while requires_grad
  bool requires_grad = false;
};

// Value-semantic handle to shared dense storage. Data buffers are written
// once by the op that produces them; gradients are the only mutable state
// during backward.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    auto n = make_node(std::move(shape));
    n->values.assign(shape_numel(n->shape), T(0));
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, T value) {
    auto n = make_node(std::move(shape));
    n->values.assign(shape_numel(n->shape), value);
    return Tensor(std::move(n));
  }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from_data(Shape shape, std::vector<T> data) {
    auto n = make_node(std::move(shape));
    require((index_t)data.size() == shape_numel(n->shape),
            "tensor data length ", data.size(), " does not match shape ",
            shape_str(n->shape));
    n->values = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1)) {
    auto t = zeros(std::move(shape));
    for (auto& v : t.values()) v = stddev * T(rng.normal());
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return (int)node_->shape.size(); }
  index_t numel() const { return (index_t)node_->values.size(); }
  index_t extent(int axis) const { return node_->shape[(std::size_t)axis]; }

  // Handle semantics: a Tensor is a reference to shared storage, so
  // accessors are const while the storage stays mutable (as with
  // shared_ptr). Ops rely on this when closures capture handles by value.
  T* data() const { return node_->values.data(); }
  std::vector<T>& values() const { return node_->values; }

  T item() const {
    require(numel() == 1, "item() on tensor of shape ", shape_str(shape()));
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  void set_requires_grad(bool b) {
    node_->requires_grad = b;
    if (b) {
      node_->grad.assign(node_->values.size(), T(0));
    } else {
      node_->grad.clear();
      node_->grad.shrink_to_fit();
    }
  }

  T* grad_data() const { return node_->grad.data(); }
  std::vector<T>& grad() const { return node_->grad; }

  void zero_grad() const {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

  static std::shared_ptr<TensorNode<T>> make_node(Shape shape) {
    for (index_t d : shape)
      require(d > 0, "tensor extents must be positive, got ", shape_str(shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    return n;
  }

  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (T x : v)
    if (!std::isfinite((double)x)) return false;
  return true;
}

}  // namespace cpgan
