// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "televit/tensor.hpp"

namespace televit {

/// Max over elements of |analytic - central difference| / max(|analytic|, |central|, 1e-8).
/// `f` must return a rank-0 tensor; `step` must lie in (0, 1e-2].
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-5);

/// Element of a parameter list: (tensor index, flat element index).
using ParamElement = std::pair<std::size_t, std::size_t>;

/// Same error measure restricted to chosen elements of existing leaf tensors.
/// `loss` is re-evaluated with each element nudged in place and restored after.
double grad_check_elements(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           const std::vector<ParamElement>& elements, double step = 1e-5);

}  // namespace televit
