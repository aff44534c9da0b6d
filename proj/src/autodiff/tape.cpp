// SPDX-License-Identifier: Apache-2.0

#include "carft/autodiff/tape.hpp"

#include <algorithm>

#include "carft/common/error.hpp"

namespace carft::ad {

std::string_view op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::tanh: return "tanh";
    case OpKind::square: return "square";
    case OpKind::gelu: return "gelu";
    case OpKind::clip: return "clip";
    case OpKind::minimum: return "minimum";
    case OpKind::maximum: return "maximum";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::sum_last: return "sum_last";
    case OpKind::inner: return "inner";
    case OpKind::softmax_last: return "softmax_last";
    case OpKind::log_softmax_last: return "log_softmax_last";
    case OpKind::logsumexp_last: return "logsumexp_last";
    case OpKind::l2_normalize_last: return "l2_normalize_last";
    case OpKind::layer_norm_last: return "layer_norm_last";
    case OpKind::gather_last: return "gather_last";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::reshape: return "reshape";
    case OpKind::transpose: return "transpose";
    case OpKind::broadcast_rows: return "broadcast_rows";
    case OpKind::causal_mask: return "causal_mask";
  }
  return "unknown";
}

Var Tape::leaf(Array value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::bind(const Array& external, bool requires_grad) {
  Node n;
  n.external = &external;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Array value, std::vector<std::size_t> parents,
                 BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw Error("autodiff", "parent id out of range");
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Array& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Array& v = value(id);
    if (n.grad.shape() == v.shape()) {
      std::fill(n.grad.data().begin(), n.grad.data().end(), 0.0);
    } else {
      n.grad = Array(v.shape(), 0.0);
    }
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error("autodiff", "loss belongs to a different tape");
  if (value(loss.id()).size() != 1) {
    throw Error("autodiff", "backward needs a scalar loss, got shape " +
                                shape_string(value(loss.id()).shape()));
  }
  for (Node& n : nodes_) n.has_grad = false;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.requires_grad && n.backward) n.backward(*this, id);
  }
}

const Array& Tape::grad(Var v) {
  if (v.tape_ != this) throw Error("autodiff", "variable belongs to a different tape");
  return grad_buffer(v.id());
}

}  // namespace carft::ad
