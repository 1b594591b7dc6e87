#pragma once

#include <functional>
#include <string>

#include "numerics/param_store.hpp"

namespace elcorec::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central
/// differences (f(x+eps) - f(x-eps)) / (2 eps), coordinate by coordinate.
///
/// The relative error of one coordinate is |analytic - numeric| divided by
/// max(|analytic|, |numeric|, floor). Below the floor the comparison is
/// absolute, so coordinates whose true gradient is ~0 do not divide
/// finite-difference rounding noise by zero.
GradCheckReport grad_check(const std::function<Tensor()>& loss, ParamStore& params, double eps = 1e-6,
                           double floor = 1e-3);

}  // namespace elcorec::nn
