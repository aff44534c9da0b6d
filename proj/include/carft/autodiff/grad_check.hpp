// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_AUTODIFF_GRAD_CHECK_HPP_
#define CARFT_AUTODIFF_GRAD_CHECK_HPP_

#include <functional>

#include "carft/autodiff/array.hpp"
#include "carft/autodiff/tape.hpp"

namespace carft::ad {

// Scalar-valued function traced on a fresh tape for each evaluation.
using ScalarFn = std::function<Var(Tape&, Var)>;

// Max over coordinates of |analytic - central difference| / max(1, |central difference|).
double grad_check(const ScalarFn& f, const Array& x, double step = 1e-5);

}  // namespace carft::ad

#endif  // CARFT_AUTODIFF_GRAD_CHECK_HPP_
