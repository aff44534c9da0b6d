// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_AUTODIFF_TAPE_HPP_
#define CARFT_AUTODIFF_TAPE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "carft/autodiff/array.hpp"

namespace carft::ad {

enum class OpKind : std::uint8_t {
  leaf,
  // Core arithmetic.
  matmul,
  add,
  sub,
  mul,
  scale,
  exp,
  log,
  tanh,
  square,
  gelu,
  clip,
  minimum,
  maximum,
  // Reductions and normalisations.
  sum,
  mean,
  sum_last,
  inner,
  softmax_last,
  log_softmax_last,
  logsumexp_last,
  l2_normalize_last,
  layer_norm_last,
  // Indexing and layout.
  gather_last,
  gather_rows,
  slice_rows,
  slice_cols,
  concat_rows,
  concat_cols,
  reshape,
  transpose,
  broadcast_rows,
  causal_mask,
};

std::string_view op_name(OpKind kind) noexcept;

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records one computation for a single backward pass. Nodes are appended in
// evaluation order, so reverse insertion order is a valid topological order.
class Tape {
 public:
  // Propagates the node's gradient into its parents' gradient buffers.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Array value, bool requires_grad = true);
  Var constant(Array value) { return leaf(std::move(value), false); }
  // Leaf that references an array owned elsewhere; `external` must outlive the tape.
  Var bind(const Array& external, bool requires_grad = true);

  Var record(OpKind kind, Array value, std::vector<std::size_t> parents, BackwardFn backward);

  // Clears all gradients, seeds d(loss)/d(loss) = 1 and propagates. Calling it
  // again on the same tape reproduces the same gradients.
  void backward(Var loss);

  // Gradient of the last backward pass; zeros if the node received none.
  const Array& grad(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  std::span<const std::size_t> parents(std::size_t id) const { return nodes_.at(id).parents; }

  // Accessors used by backward closures.
  const Array& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Array& grad_of(std::size_t id) const { return nodes_[id].grad; }
  // Zero-initialised on first access during a backward pass.
  Array& grad_buffer(std::size_t id);

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    Array value;
    const Array* external = nullptr;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    Array grad;
  };

  std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return tape_->value(id_); }

}  // namespace carft::ad

#endif  // CARFT_AUTODIFF_TAPE_HPP_
