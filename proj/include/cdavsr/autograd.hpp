#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "cdavsr/tensor.hpp"

namespace cdavsr {

template <typename T>
class Tape;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  Tape<T>* tape = nullptr;
  /// Receives d(out)/d(this) and accumulates into the inputs' grads.
  std::function<void(const Tensor<T>&)> backward;

  void accumulate(Tensor<T>&& g);
  void accumulate(const Tensor<T>& g);
};

/// Handle to a value in the computation graph. Values that do not require
/// gradients are plain constants and never touch a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> constant)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(constant);
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Tape<T>* tape() const noexcept { return node_ ? node_->tape : nullptr; }

  /// Gradient after Tape::backward; zeros when the node was unreachable.
  Tensor<T> grad() const;
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Records differentiable nodes in creation order; backward replays them in
/// reverse, which is a valid topological order for a DAG built forwards.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  void record(const std::shared_ptr<Node<T>>& node) { nodes_.push_back(node); }
  void backward(const Var<T>& scalar_output);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

/// Builds the result node of an op. When no input requires a gradient the
/// result is a constant and `backward` is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   std::function<void(const Tensor<T>&)> backward);

}  // namespace cdavsr
