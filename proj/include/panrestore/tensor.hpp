#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "panrestore/error.hpp"

namespace panrestore {

// Dense 4-D layout: batch x channels x height x width, row-major.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  constexpr std::size_t index(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
  }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

// Graph recording is on by default; a NoGradGuard disables it for the current
// thread while it is alive.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Reference-counted handle to a node of the autograd graph. Copies share
// storage; use clone() for an independent deep copy.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));

  static Tensor from_data(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape) { return Tensor(shape, T(0)); }
  static Tensor ones(Shape shape) { return Tensor(shape, T(1)); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T at(int n, int c, int h, int w) const { return node_->value[shape().index(n, c, h, w)]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const;
  template <typename U>
  Tensor<U> cast() const;

  // Reverse-mode sweep from a scalar (single-element) tensor.
  void backward() const;

  const NodePtr& node() const { return node_; }
  static Tensor wrap(NodePtr node);

 private:
  NodePtr node_;
};

// Creates the output node of an operation. When recording is enabled and any
// input requires a gradient, the node keeps the inputs alive and stores the
// backward closure; otherwise the result is a detached leaf.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(detail::Node<T>&)> backward);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward);

}  // namespace panrestore
