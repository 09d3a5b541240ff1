#include "cdavsr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "cdavsr/autograd.hpp"
#include "cdavsr/mac_counter.hpp"

namespace cdavsr {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  require(shape.valid(), "tensor extents must be >= 1, got " + shape.str());
  data_.assign(shape.size(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  require(shape.valid(), "tensor extents must be >= 1, got " + shape.str());
  require(data_.size() == shape.size(), "tensor data length " + std::to_string(data_.size()) +
                                            " does not match shape " + shape.str());
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "max_abs_diff shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  T m = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template class Tensor<float>;
template class Tensor<double>;
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

// ---------------------------------------------------------------------------
// autograd

template <typename T>
void Node<T>::accumulate(Tensor<T>&& g) {
  if (grad.empty()) {
    grad = std::move(g);
    return;
  }
  T* dst = grad.ptr();
  const T* src = g.ptr();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  T* dst = grad.ptr();
  const T* src = g.ptr();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

template <typename T>
Tensor<T> Var<T>::grad() const {
  if (!node_) return {};
  if (node_->grad.empty()) return Tensor<T>(node_->value.shape());
  return node_->grad;
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) {
    node->tape = this;
    record(node);
  }
  return Var<T>(node);
}

template <typename T>
void Tape<T>::backward(const Var<T>& out) {
  require(out.defined() && out.value().size() == 1,
          "backward needs a scalar output, got shape " +
              (out.defined() ? out.shape().str() : std::string("<undefined>")));
  require(out.tape() == this, "backward output was not produced under this tape");
  for (auto& n : nodes_) n->grad = Tensor<T>();
  out.node()->grad = Tensor<T>(out.shape(), T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n.grad);
  }
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   std::function<void(const Tensor<T>&)> backward) {
  Tape<T>* tape = nullptr;
  for (const Var<T>* in : inputs) {
    if (in && in->requires_grad()) {
      require(tape == nullptr || tape == in->tape(), "op inputs recorded on different tapes");
      tape = in->tape();
    }
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (tape) {
    node->requires_grad = true;
    node->tape = tape;
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Var<T>(node);
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;
template Var<float> make_result(Tensor<float>, std::initializer_list<const Var<float>*>,
                                std::function<void(const Tensor<float>&)>);
template Var<double> make_result(Tensor<double>, std::initializer_list<const Var<double>*>,
                                 std::function<void(const Tensor<double>&)>);

// ---------------------------------------------------------------------------
// MAC counting

namespace {
thread_local MacCounter* g_active = nullptr;
}

MacCounter::MacCounter() : parent_(g_active) { g_active = this; }

MacCounter::~MacCounter() { g_active = parent_; }

void MacCounter::add(std::uint64_t macs) noexcept {
  for (MacCounter* c = g_active; c != nullptr; c = c->parent_) c->total_ += macs;
}

}  // namespace cdavsr
