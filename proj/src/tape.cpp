#include "gatta/tape.hpp"

#include <string>

#include "gatta/error.hpp"
#include "gatta/rng.hpp"

namespace gatta {

void Tape::note_branches(std::uint64_t digest) { branches_ = derive_seed(branches_, digest); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) { return push(Node{std::move(value), nullptr, false, {}}); }

Var Tape::constant_ref(const Tensor& value) { return push(Node{{}, &value, false, {}}); }

Var Tape::parameter(Tensor value) { return push(Node{std::move(value), nullptr, true, {}}); }

Var Tape::parameter_ref(const Tensor& value) { return push(Node{{}, &value, true, {}}); }

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 Backward backward) {
  if (!value.all_finite())
    throw NumericError("non-finite value produced by " + std::string(op));
  bool needs_grad = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw std::invalid_argument(std::string(op) + ": input from another tape");
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  if (!needs_grad) backward = nullptr;
  return push(Node{std::move(value), nullptr, needs_grad, std::move(backward)});
}

const Tensor& Tape::value(Var v) const {
  const Node& node = nodes_[v.id_];
  return node.borrowed ? *node.borrowed : node.owned;
}

Tensor& Tape::grad_slot(Var v) {
  Tensor& g = grads_[v.id_];
  if (g.shape() != value(v).shape()) g = Tensor(value(v).shape());
  return g;
}

void Tape::accumulate_grad(Var v, Tensor&& delta) {
  if (!nodes_[v.id_].requires_grad) return;
  Tensor& slot = grads_[v.id_];
  if (delta.shape() != value(v).shape())
    throw std::invalid_argument("accumulate_grad: shape mismatch");
  if (slot.empty()) {
    slot = std::move(delta);
    return;
  }
  real* dst = slot.raw();
  const real* src = delta.raw();
  const std::size_t n = slot.numel();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

const Tensor* Tape::grad(Var v) const {
  const Tensor& g = grads_[v.id_];
  return g.empty() ? nullptr : &g;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("backward: loss from another tape");
  if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  for (Tensor& g : grads_) g = Tensor();
  grad_slot(loss).fill(real(1));
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || grads_[i].empty()) continue;
    if (!grads_[i].all_finite())
      throw NumericError("non-finite gradient at tape node " + std::to_string(i));
    node.backward(*this, grads_[i]);
    grads_[i] = Tensor();  // interior grads are consumed; leaves keep theirs
  }
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    if (!grads_[i].empty() && !grads_[i].all_finite())
      throw NumericError("non-finite gradient at tape node " + std::to_string(i));
  }
}

}  // namespace gatta
