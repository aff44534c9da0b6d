// SPDX-License-Identifier: Apache-2.0

#include "carft/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "carft/common/error.hpp"

namespace carft::ad {
namespace {

[[noreturn]] void fail(const std::string& message) { throw Error("autodiff", message); }

Tape& tape_of(Var a) {
  if (!a.valid()) fail("operation on an empty variable");
  return a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (!b.valid() || &b.tape() != &t) fail("operands recorded on different tapes");
  return t;
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

// Elementwise binary layout: equal shapes, or one side broadcast as a scalar.
enum class Broadcast { none, left, right };

Broadcast broadcast_mode(const Array& a, const Array& b, std::string_view op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.size() == 1) return Broadcast::right;
  if (a.size() == 1) return Broadcast::left;
  fail(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
       shape_string(b.shape()));
}

template <typename Forward>
Array binary_forward(const Array& a, const Array& b, Broadcast mode, Forward f) {
  const Array& big = mode == Broadcast::left ? b : a;
  std::vector<double> out(big.size());
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  switch (mode) {
    case Broadcast::none:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
      break;
    case Broadcast::right:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[0]);
      break;
    case Broadcast::left:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[0], pb[i]);
      break;
  }
  return make_unchecked(big.shape(), std::move(out));
}

// Accumulates d/d(operand) given per-element partials: partial(i) is the
// derivative of out[i] with respect to the operand's (broadcast) element.
template <typename Partial>
void accumulate_operand(Tape& t, std::size_t operand, bool broadcast_scalar,
                        const Array& g, Partial partial) {
  if (!t.requires_grad(operand)) return;
  Array& ga = t.grad_buffer(operand);
  if (broadcast_scalar) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * partial(i);
    ga[0] += s;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * partial(i);
  }
}

template <typename Forward, typename Derivative>
Var unary(OpKind kind, Var a, Forward f, Derivative df) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Array y = make_unchecked(x.shape(), std::move(out));
  if (!y.all_finite()) fail(std::string(op_name(kind)) + ": non-finite result");
  const std::size_t ia = a.id();
  return t.record(kind, std::move(y), {ia}, [ia, df](Tape& tp, std::size_t self) {
    const Array& x = tp.value(ia);
    const Array& y = tp.value(self);
    const Array& g = tp.grad_of(self);
    Array& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

void require_rank2(const Array& a, std::string_view op) {
  if (a.rank() != 2) fail(std::string(op) + ": expected rank-2 input, got " + shape_string(a.shape()));
}

void require_rank_at_least1(const Array& a, std::string_view op) {
  if (a.rank() < 1) fail(std::string(op) + ": expected rank >= 1 input");
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& A = a.value();
  const Array& B = b.value();
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    fail("matmul: inner dimensions differ, " + shape_string(A.shape()) + " x " +
         shape_string(B.shape()));
  }
  // i-k-j order: each output element accumulates over k in a fixed order,
  // independent of how many rows are in the batch.
  std::vector<double> out = zeros(m * n);
  const double* pa = A.ptr();
  const double* pb = B.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::matmul, make_unchecked({m, n}, std::move(out)), {ia, ib},
                  [ia, ib, m, k, n](Tape& tp, std::size_t self) {
                    const double* g = tp.grad_of(self).ptr();
                    const double* pa = tp.value(ia).ptr();
                    const double* pb = tp.value(ib).ptr();
                    if (tp.requires_grad(ia)) {
                      double* ga = tp.grad_buffer(ia).ptr();
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = g + i * n;
                        for (std::size_t p = 0; p < k; ++p) {
                          const double* brow = pb + p * n;
                          double s = 0.0;
                          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                          ga[i * k + p] += s;
                        }
                      }
                    }
                    if (tp.requires_grad(ib)) {
                      double* gb = tp.grad_buffer(ib).ptr();
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = g + i * n;
                        for (std::size_t p = 0; p < k; ++p) {
                          const double av = pa[i * k + p];
                          double* gbrow = gb + p * n;
                          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                        }
                      }
                    }
                  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast mode = broadcast_mode(a.value(), b.value(), "add");
  Array y = binary_forward(a.value(), b.value(), mode, [](double x, double z) { return x + z; });
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::add, std::move(y), {ia, ib}, [ia, ib, mode](Tape& tp, std::size_t self) {
    const Array& g = tp.grad_of(self);
    auto one = [](std::size_t) { return 1.0; };
    accumulate_operand(tp, ia, mode == Broadcast::left, g, one);
    accumulate_operand(tp, ib, mode == Broadcast::right, g, one);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast mode = broadcast_mode(a.value(), b.value(), "sub");
  Array y = binary_forward(a.value(), b.value(), mode, [](double x, double z) { return x - z; });
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::sub, std::move(y), {ia, ib}, [ia, ib, mode](Tape& tp, std::size_t self) {
    const Array& g = tp.grad_of(self);
    accumulate_operand(tp, ia, mode == Broadcast::left, g, [](std::size_t) { return 1.0; });
    accumulate_operand(tp, ib, mode == Broadcast::right, g, [](std::size_t) { return -1.0; });
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast mode = broadcast_mode(a.value(), b.value(), "mul");
  Array y = binary_forward(a.value(), b.value(), mode, [](double x, double z) { return x * z; });
  if (!y.all_finite()) fail("mul: non-finite result");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::mul, std::move(y), {ia, ib}, [ia, ib, mode](Tape& tp, std::size_t self) {
    const Array& g = tp.grad_of(self);
    const Array& va = tp.value(ia);
    const Array& vb = tp.value(ib);
    const bool a_scalar = mode == Broadcast::left;
    const bool b_scalar = mode == Broadcast::right;
    accumulate_operand(tp, ia, a_scalar, g,
                       [&](std::size_t i) { return b_scalar ? vb[0] : vb[i]; });
    accumulate_operand(tp, ib, b_scalar, g,
                       [&](std::size_t i) { return a_scalar ? va[0] : va[i]; });
  });
}

Var scale(Var a, double factor) {
  if (!std::isfinite(factor)) fail("scale: non-finite factor");
  return unary(
      OpKind::scale, a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Var exp(Var a) {
  return unary(
      OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) fail("log: non-positive input " + std::to_string(v));
  }
  return unary(
      OpKind::log, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(
      OpKind::tanh, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
  return unary(
      OpKind::square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var gelu(Var a) {
  constexpr double kC = 0.044715;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  return unary(
      OpKind::gelu, a,
      [k](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + kC * x * x * x))); },
      [k](double x, double) {
        const double th = std::tanh(k * (x + kC * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * k * (1.0 + 3.0 * kC * x * x);
      });
}

Var clip(Var a, double lo, double hi) {
  if (!(lo <= hi)) fail("clip: lower bound exceeds upper bound");
  return unary(
      OpKind::clip, a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var clip(Var a, const Array& lo, const Array& hi) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  if (lo.shape() != x.shape() || hi.shape() != x.shape()) {
    fail("clip: bound shapes " + shape_string(lo.shape()) + "/" + shape_string(hi.shape()) +
         " do not match input " + shape_string(x.shape()));
  }
  std::vector<double> out(x.size());
  std::vector<double> inside(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(lo[i] <= hi[i])) fail("clip: lower bound exceeds upper bound");
    out[i] = std::min(std::max(x[i], lo[i]), hi[i]);
    inside[i] = (x[i] >= lo[i] && x[i] <= hi[i]) ? 1.0 : 0.0;
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::clip, make_unchecked(x.shape(), std::move(out)), {ia},
                  [ia, inside = std::move(inside)](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * inside[i];
                  });
}

namespace {

Var select_binary(OpKind kind, Var a, Var b, bool take_min) {
  Tape& t = tape_of(a, b);
  const Array& va = a.value();
  const Array& vb = b.value();
  if (va.shape() != vb.shape()) {
    fail(std::string(op_name(kind)) + ": shape mismatch " + shape_string(va.shape()) + " vs " +
         shape_string(vb.shape()));
  }
  std::vector<double> out(va.size());
  std::vector<char> first(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    first[i] = take_min ? (va[i] <= vb[i]) : (va[i] >= vb[i]);
    out[i] = first[i] ? va[i] : vb[i];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(kind, make_unchecked(va.shape(), std::move(out)), {ia, ib},
                  [ia, ib, first = std::move(first)](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    if (tp.requires_grad(ia)) {
                      Array& ga = tp.grad_buffer(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (first[i]) ga[i] += g[i];
                      }
                    }
                    if (tp.requires_grad(ib)) {
                      Array& gb = tp.grad_buffer(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (!first[i]) gb[i] += g[i];
                      }
                    }
                  });
}

}  // namespace

Var minimum(Var a, Var b) { return select_binary(OpKind::minimum, a, b, true); }
Var maximum(Var a, Var b) { return select_binary(OpKind::maximum, a, b, false); }

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.record(OpKind::sum, Array::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    for (double& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.record(OpKind::mean, Array::scalar(s / n), {ia}, [ia, n](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0] / n;
    for (double& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var sum_last(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "sum_last");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r] += x[r * n + j];
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::sum_last, make_unchecked(drop_last(x.shape()), std::move(out)), {ia},
                  [ia, rows, n](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[r];
                    }
                  });
}

Var inner(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Array& va = a.value();
  const Array& vb = b.value();
  if (va.shape() != vb.shape()) {
    fail("inner: shape mismatch " + shape_string(va.shape()) + " vs " + shape_string(vb.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::inner, Array::scalar(s), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    const Array& va = tp.value(ia);
    const Array& vb = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Array& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * vb[i];
    }
    if (tp.requires_grad(ib)) {
      Array& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * va[i];
    }
  });
}

Var softmax_last(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "softmax_last");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * n;
    double* yr = out.data() + r * n;
    const double m = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - m);
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::softmax_last, make_unchecked(x.shape(), std::move(out)), {ia},
                  [ia, rows, n](Tape& tp, std::size_t self) {
                    const Array& y = tp.value(self);
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                      for (std::size_t j = 0; j < n; ++j) {
                        ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                      }
                    }
                  });
}

namespace {

// Row-wise log-sum-exp with max subtraction.
std::vector<double> row_logsumexp(const Array& x) {
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  std::vector<double> lse(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * n;
    const double m = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - m);
    lse[r] = m + std::log(z);
  }
  return lse;
}

}  // namespace

Var log_softmax_last(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "log_softmax_last");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  const std::vector<double> lse = row_logsumexp(x);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] - lse[r];
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::log_softmax_last, make_unchecked(x.shape(), std::move(out)), {ia},
                  [ia, rows, n](Tape& tp, std::size_t self) {
                    const Array& y = tp.value(self);
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double gs = 0.0;
                      for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
                      for (std::size_t j = 0; j < n; ++j) {
                        ga[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
                      }
                    }
                  });
}

Var logsumexp_last(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "logsumexp_last");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  std::vector<double> lse = row_logsumexp(x);
  const std::size_t ia = a.id();
  return t.record(OpKind::logsumexp_last, make_unchecked(drop_last(x.shape()), std::move(lse)),
                  {ia}, [ia, rows, n](Tape& tp, std::size_t self) {
                    const Array& x = tp.value(ia);
                    const Array& y = tp.value(self);
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < n; ++j) {
                        ga[r * n + j] += g[r] * std::exp(x[r * n + j] - y[r]);
                      }
                    }
                  });
}

Var l2_normalize_last(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "l2_normalize_last");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  std::vector<double> norms(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += x[r * n + j] * x[r * n + j];
    norms[r] = std::sqrt(ss);
    if (!(norms[r] > 0.0)) fail("l2_normalize_last: zero-norm row " + std::to_string(r));
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] / norms[r];
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::l2_normalize_last, make_unchecked(x.shape(), std::move(out)), {ia},
                  [ia, rows, n, norms = std::move(norms)](Tape& tp, std::size_t self) {
                    const Array& y = tp.value(self);
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                      for (std::size_t j = 0; j < n; ++j) {
                        ga[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) / norms[r];
                      }
                    }
                  });
}

Var layer_norm_last(Var a, double eps) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "layer_norm_last");
  if (!(eps > 0.0)) fail("layer_norm_last: eps must be positive");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  const double dn = static_cast<double>(n);
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= dn;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= dn;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (xr[j] - mu) * inv_std[r];
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::layer_norm_last, make_unchecked(x.shape(), std::move(out)), {ia},
                  [ia, rows, n, dn, inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Array& y = tp.value(self);
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double gm = 0.0, gy = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        gm += g[r * n + j];
                        gy += g[r * n + j] * y[r * n + j];
                      }
                      gm /= dn;
                      gy /= dn;
                      for (std::size_t j = 0; j < n; ++j) {
                        ga[r * n + j] += inv_std[r] * (g[r * n + j] - gm - y[r * n + j] * gy);
                      }
                    }
                  });
}

Var gather_last(Var a, std::span<const std::size_t> indices) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank_at_least1(x, "gather_last");
  const std::size_t rows = x.outer_size(), n = x.last_dim();
  if (indices.size() != rows) {
    fail("gather_last: " + std::to_string(indices.size()) + " indices for " +
         std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= n) fail("gather_last: index " + std::to_string(idx[r]) + " out of range");
    out[r] = x[r * n + idx[r]];
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::gather_last, make_unchecked(drop_last(x.shape()), std::move(out)), {ia},
                  [ia, n, idx = std::move(idx)](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < idx.size(); ++r) ga[r * n + idx[r]] += g[r];
                  });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) fail("gather_rows: expected rank 1 or 2");
  if (indices.empty()) fail("gather_rows: empty index list");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.rank() == 2 ? x.dim(1) : 1;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) fail("gather_rows: row " + std::to_string(idx[r]) + " out of range");
    std::copy_n(x.ptr() + idx[r] * cols, cols, out.data() + r * cols);
  }
  Shape shape = x.rank() == 2 ? Shape{idx.size(), cols} : Shape{idx.size()};
  const std::size_t ia = a.id();
  return t.record(OpKind::gather_rows, make_unchecked(std::move(shape), std::move(out)), {ia},
                  [ia, cols, idx = std::move(idx)](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                      for (std::size_t c = 0; c < cols; ++c) ga[idx[r] * cols + c] += g[r * cols + c];
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) fail("slice_rows: expected rank 1 or 2");
  if (begin >= end || end > x.dim(0)) {
    fail("slice_rows: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
         ") for " + shape_string(x.shape()));
  }
  const std::size_t cols = x.rank() == 2 ? x.dim(1) : 1;
  std::vector<double> out(x.ptr() + begin * cols, x.ptr() + end * cols);
  Shape shape = x.shape();
  shape[0] = end - begin;
  const std::size_t ia = a.id();
  const std::size_t offset = begin * cols;
  return t.record(OpKind::slice_rows, make_unchecked(std::move(shape), std::move(out)), {ia},
                  [ia, offset](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    double* ga = tp.grad_buffer(ia).ptr() + offset;
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank2(x, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    fail("slice_cols: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
         ") for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.ptr() + r * cols + begin, w, out.data() + r * w);
  const std::size_t ia = a.id();
  return t.record(OpKind::slice_cols, make_unchecked({rows, w}, std::move(out)), {ia},
                  [ia, rows, cols, begin, w](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t cols = parts[0].value().rank() == 2 ? parts[0].value().dim(1) : 0;
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    if (&tape_of(p) != &t) fail("concat_rows: operands recorded on different tapes");
    const Array& v = p.value();
    if (v.rank() != 2 || v.dim(1) != cols) {
      fail("concat_rows: incompatible part shape " + shape_string(v.shape()));
    }
    rows += v.dim(0);
    ids.push_back(p.id());
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (Var p : parts) out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  return t.record(OpKind::concat_rows, make_unchecked({rows, cols}, std::move(out)), ids,
                  [ids](Tape& tp, std::size_t self) {
                    const double* g = tp.grad_of(self).ptr();
                    for (std::size_t id : ids) {
                      const std::size_t n = tp.value(id).size();
                      if (tp.requires_grad(id)) {
                        double* ga = tp.grad_buffer(id).ptr();
                        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                      }
                      g += n;
                    }
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rank() == 2 ? parts[0].value().dim(0) : 0;
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    if (&tape_of(p) != &t) fail("concat_cols: operands recorded on different tapes");
    const Array& v = p.value();
    if (v.rank() != 2 || v.dim(0) != rows) {
      fail("concat_cols: incompatible part shape " + shape_string(v.shape()));
    }
    cols += v.dim(1);
    ids.push_back(p.id());
    widths.push_back(v.dim(1));
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.ptr() + r * widths[k], widths[k], out.data() + r * cols + offset);
    }
    offset += widths[k];
  }
  return t.record(OpKind::concat_cols, make_unchecked({rows, cols}, std::move(out)), ids,
                  [ids, widths, rows, cols](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) {
                        Array& ga = tp.grad_buffer(ids[k]);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t c = 0; c < widths[k]; ++c) {
                            ga[r * widths[k] + c] += g[r * cols + offset + c];
                          }
                        }
                      }
                      offset += widths[k];
                    }
                  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Array y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return t.record(OpKind::reshape, std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
    const Array& g = tp.grad_of(self);
    Array& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank2(x, "transpose");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = x[r * cols + c];
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::transpose, make_unchecked({cols, rows}, std::move(out)), {ia},
                  [ia, rows, cols](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c * rows + r];
                    }
                  });
}

Var broadcast_rows(Var v, std::size_t rows) {
  Tape& t = tape_of(v);
  const Array& x = v.value();
  if (x.rank() != 1) fail("broadcast_rows: expected rank-1 input, got " + shape_string(x.shape()));
  if (rows == 0) fail("broadcast_rows: zero rows");
  const std::size_t cols = x.dim(0);
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.ptr(), cols, out.data() + r * cols);
  const std::size_t ia = v.id();
  return t.record(OpKind::broadcast_rows, make_unchecked({rows, cols}, std::move(out)), {ia},
                  [ia, rows, cols](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) ga[c] += g[r * cols + c];
                    }
                  });
}

Var causal_mask(Var a) {
  Tape& t = tape_of(a);
  const Array& x = a.value();
  require_rank2(x, "causal_mask");
  const std::size_t n = x.dim(0);
  if (x.dim(1) != n) fail("causal_mask: expected square scores, got " + shape_string(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r + 1; c < n; ++c) out[r * n + c] = kMaskedScore;
  }
  const std::size_t ia = a.id();
  return t.record(OpKind::causal_mask, make_unchecked(x.shape(), std::move(out)), {ia},
                  [ia, n](Tape& tp, std::size_t self) {
                    const Array& g = tp.grad_of(self);
                    Array& ga = tp.grad_buffer(ia);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t c = 0; c <= r; ++c) ga[r * n + c] += g[r * n + c];
                    }
                  });
}

Var apply_primitive(OpKind kind, std::span<const Var> inputs, const PrimitiveArgs& args) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      fail(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs, got " +
           std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::leaf: fail("apply_primitive: leaf is not an operation");
    case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::sub: arity(2); return sub(inputs[0], inputs[1]);
    case OpKind::mul: arity(2); return mul(inputs[0], inputs[1]);
    case OpKind::scale: arity(1); return scale(inputs[0], args.factor);
    case OpKind::exp: arity(1); return exp(inputs[0]);
    case OpKind::log: arity(1); return log(inputs[0]);
    case OpKind::tanh: arity(1); return tanh(inputs[0]);
    case OpKind::square: arity(1); return square(inputs[0]);
    case OpKind::gelu: arity(1); return gelu(inputs[0]);
    case OpKind::clip: arity(1); return clip(inputs[0], args.lo, args.hi);
    case OpKind::minimum: arity(2); return minimum(inputs[0], inputs[1]);
    case OpKind::maximum: arity(2); return maximum(inputs[0], inputs[1]);
    case OpKind::sum: arity(1); return sum(inputs[0]);
    case OpKind::mean: arity(1); return mean(inputs[0]);
    case OpKind::sum_last: arity(1); return sum_last(inputs[0]);
    case OpKind::inner: arity(2); return inner(inputs[0], inputs[1]);
    case OpKind::softmax_last: arity(1); return softmax_last(inputs[0]);
    case OpKind::log_softmax_last: arity(1); return log_softmax_last(inputs[0]);
    case OpKind::logsumexp_last: arity(1); return logsumexp_last(inputs[0]);
    case OpKind::l2_normalize_last: arity(1); return l2_normalize_last(inputs[0]);
    case OpKind::layer_norm_last: arity(1); return layer_norm_last(inputs[0], args.eps);
    case OpKind::gather_last: arity(1); return gather_last(inputs[0], args.indices);
    case OpKind::gather_rows: arity(1); return gather_rows(inputs[0], args.indices);
    case OpKind::slice_rows: arity(1); return slice_rows(inputs[0], args.begin, args.end);
    case OpKind::slice_cols: arity(1); return slice_cols(inputs[0], args.begin, args.end);
    case OpKind::concat_rows: return concat_rows(inputs);
    case OpKind::concat_cols: return concat_cols(inputs);
    case OpKind::reshape: arity(1); return reshape(inputs[0], args.shape);
    case OpKind::transpose: arity(1); return transpose(inputs[0]);
    case OpKind::broadcast_rows: arity(1); return broadcast_rows(inputs[0], args.rows);
    case OpKind::causal_mask: arity(1); return causal_mask(inputs[0]);
  }
  fail("apply_primitive: unknown kind");
}

}  // namespace carft::ad
