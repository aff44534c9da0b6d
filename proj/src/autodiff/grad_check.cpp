// SPDX-License-Identifier: Apache-2.0

#include "carft/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "carft/common/error.hpp"

namespace carft::ad {
namespace {

double evaluate(const ScalarFn& f, const Array& x) {
  Tape tape;
  const double v = f(tape, tape.constant(x)).value().item();
  if (!std::isfinite(v)) throw Error("autodiff", "grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, const Array& x, double step) {
  if (!(step > 0.0)) throw Error("autodiff", "grad_check: step must be positive");

  Tape tape;
  Var input = tape.leaf(x);
  Var out = f(tape, input);
  if (!std::isfinite(out.value().item())) {
    throw Error("autodiff", "grad_check: non-finite function value");
  }
  tape.backward(out);
  const Array analytic = tape.grad(input);

  double worst = 0.0;
  Array probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = evaluate(f, probe);
    probe[i] = x[i] - step;
    const double down = evaluate(f, probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace carft::ad
