// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_AUTODIFF_AUTODIFF_HPP_
#define CARFT_AUTODIFF_AUTODIFF_HPP_

#include "carft/autodiff/array.hpp"
#include "carft/autodiff/grad_check.hpp"
#include "carft/autodiff/ops.hpp"
#include "carft/autodiff/tape.hpp"

#endif  // CARFT_AUTODIFF_AUTODIFF_HPP_
