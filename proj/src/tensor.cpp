#include "panrestore/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace panrestore {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<detail::Node<T>>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ConfigError("negative tensor dimension in shape " + shape.str());
  }
  node_->shape = shape;
  node_->value.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> values) {
  if (values.size() != shape.numel()) {
    throw ConfigError("data length " + std::to_string(values.size()) +
                      " does not match shape " + shape.str());
  }
  Tensor t;
  t.node_ = std::make_shared<detail::Node<T>>();
  t.node_->shape = shape;
  t.node_->value = std::move(values);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::wrap(NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ConfigError("item() on tensor of shape " + shape().str());
  }
  return node_->value[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from_data(shape(), node_->value);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return clone();
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
  std::vector<U> values(node_->value.begin(), node_->value.end());
  return Tensor<U>::from_data(shape(), std::move(values));
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ConfigError("backward() requires a scalar loss, got shape " + shape().str());
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

namespace {

template <typename T>
Tensor<T> build_result(Shape shape, std::vector<T> values,
                       std::vector<std::shared_ptr<detail::Node<T>>> parents,
                       std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  const bool track =
      grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                    [](const auto& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<T>::wrap(std::move(node));
}

}  // namespace

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(detail::Node<T>&)> backward) {
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  parents.reserve(inputs.size());
  for (const Tensor<T>* t : inputs) parents.push_back(t->node());
  return build_result(shape, std::move(values), std::move(parents), std::move(backward));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward) {
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  parents.reserve(inputs.size());
  for (const Tensor<T>& t : inputs) parents.push_back(t.node());
  return build_result(shape, std::move(values), std::move(parents), std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;

template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(detail::Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&,
                                    std::function<void(detail::Node<double>&)>);

}  // namespace panrestore
