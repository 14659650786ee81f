// SPDX-License-Identifier: Apache-2.0
#include "televit/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "televit/errors.hpp"

namespace televit {

namespace {

void check_step(double step) {
  if (!(step > 0.0 && step <= 1e-2)) throw ContractError("grad_check: step must be in (0, 1e-2]");
}

double scalar_of(const Tensor& t) {
  if (t.rank() != 0)
    throw ContractError("grad_check: function must return a scalar, got " + shape_str(t.shape()));
  return t.item();
}

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  check_step(step);
  Tensor leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  const Tensor y = f(leaf);
  scalar_of(y);
  backward(y);
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaf.numel(); ++i) {
    Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
    probe.mutable_data()[i] += step;
    const double up = scalar_of(f(probe));
    probe.mutable_data()[i] = x.data()[i] - step;
    const double down = scalar_of(f(probe));
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

double grad_check_elements(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           const std::vector<ParamElement>& elements, double step) {
  check_step(step);
  for (auto& p : params) p.zero_grad();
  const Tensor y = loss();
  scalar_of(y);
  backward(y);
  std::vector<double> analytic;
  analytic.reserve(elements.size());
  for (const auto& [t, i] : elements) {
    if (t >= params.size() || i >= params[t].numel())
      throw ContractError("grad_check_elements: element out of range");
    analytic.push_back(params[t].has_grad() ? params[t].grad()[i] : 0.0);
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t e = 0; e < elements.size(); ++e) {
    const auto [t, i] = elements[e];
    auto values = params[t].mutable_data();
    const double original = values[i];
    values[i] = original + step;
    const double up = scalar_of(loss());
    values[i] = original - step;
    const double down = scalar_of(loss());
    values[i] = original;
    worst = std::max(worst, rel_error(analytic[e], (up - down) / (2.0 * step)));
  }
  return worst;
}

}  // namespace televit
