#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "gatta/tensor.hpp"

namespace gatta {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode recording. Operations append nodes in execution order, so
/// node ids are a topological order and backward is a single reverse sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Borrowed constant; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf that receives a gradient.
  Var parameter(Tensor value);
  /// Borrowed leaf that receives a gradient; `value` must outlive the tape.
  Var parameter_ref(const Tensor& value);

  /// Appends an op result. `backward` is kept only if an input needs a gradient.
  /// Throws NumericError if `value` holds NaN or Inf.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  /// Gradient accumulator for `v`, zero-initialised on first access.
  Tensor& grad_slot(Var v);
  /// Adds `delta` into v's gradient (adopting the buffer if none exists yet).
  void accumulate_grad(Var v, Tensor&& delta);
  /// Gradient of a leaf after backward(); null when `v` was not reached.
  /// Interior gradients are released during the sweep.
  const Tensor* grad(Var v) const;

  /// Seeds d(loss)/d(loss)=1 on a single-element `loss` and sweeps backward.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  /// Non-smooth ops (relu, max, clamp) fold their branch choices in here, so
  /// two forward passes share a signature iff they took the same branches.
  void note_branches(std::uint64_t digest);
  std::uint64_t branch_signature() const { return branches_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Node node);

  // deques keep value() and grad() references valid while the tape grows
  std::deque<Node> nodes_;
  std::deque<Tensor> grads_;
  std::uint64_t branches_ = 0;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }
inline bool Var::requires_grad() const { return tape_->requires_grad(*this); }

}  // namespace gatta
