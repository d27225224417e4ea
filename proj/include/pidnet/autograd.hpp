#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pidnet/tensor.hpp"

namespace pidnet {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves
};

// Handle to a value that may participate in reverse-mode differentiation.
// Copies share the underlying node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad() { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  std::uint64_t tape_id() const { return node_ ? node_->tape_id : 0; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Returns the gradient buffer of `node`, allocating zeros on first use.
template <typename T>
Tensor<T>& grad_buffer(Node<T>& node) {
  if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
  return node.grad;
}

// Ordered record of differentiable operations. Operations append themselves
// while the tape is active on the calling thread (see TapeScope); backward()
// replays them once, in reverse order.
template <typename T>
class Tape {
 public:
  // Receives the output node (value and accumulated gradient) and pushes
  // gradients into the captured inputs.
  using BackwardFn = std::function<void(const Node<T>& out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> record(Tensor<T> out, const std::vector<const Var<T>*>& inputs,
                BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node that
  // requires a gradient. Gradients accumulate (sum over paths) into leaves.
  void backward(const Var<T>& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }

  static Tape* active();

 private:
  template <typename U>
  friend class TapeScope;

  struct Entry {
    std::shared_ptr<Node<T>> output;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  std::uint64_t id_;
  bool consumed_ = false;
};

// Makes `tape` the active tape for the current thread for the scope's
// lifetime. Pass nullptr to suspend recording (e.g. inside a no-grad block).
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Records `out` on the active tape when any input requires a gradient;
// otherwise wraps it as a constant. `make_backward` is only invoked when
// recording, so ops can defer saving context.
template <typename T, typename MakeBackward>
Var<T> make_result(Tensor<T> out, const std::vector<const Var<T>*>& inputs,
                   MakeBackward&& make_backward) {
  Tape<T>* tape = Tape<T>::active();
  bool needs = false;
  for (const Var<T>* v : inputs) needs = needs || v->requires_grad();
  if (tape == nullptr || !needs) return Var<T>(std::move(out));
  return tape->record(std::move(out), inputs, make_backward());
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;

}  // namespace pidnet
