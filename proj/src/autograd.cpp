#include "pidnet/autograd.hpp"

#include <atomic>

namespace pidnet {
namespace {

std::atomic<std::uint64_t> next_tape_id{1};

template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot<T>();
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> out, const std::vector<const Var<T>*>&,
                       BackwardFn backward) {
  if (consumed_) throw Error("tape already consumed; cannot record");
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(out);
  node->requires_grad = true;
  node->tape_id = id_;
  entries_.push_back(Entry{node, std::move(backward)});
  return Var<T>(std::move(node));
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (consumed_) throw Error("tape already consumed");
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? loss.shape().str() : "undefined"));
  }
  if (loss.tape_id() != id_) {
    throw Error("backward: loss was not produced on this tape");
  }
  consumed_ = true;

  grad_buffer(*loss.node()).fill(T(1));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not on a path to the loss
    it->backward(*it->output);
  }
  // Release saved context; intermediate values die with their last handle.
  entries_.clear();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>* tape) : previous_(active_slot<T>()) {
  active_slot<T>() = tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_slot<T>() = previous_;
}

template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;

}  // namespace pidnet
