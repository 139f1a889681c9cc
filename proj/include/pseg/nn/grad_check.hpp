#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pseg::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences (f(x + eps) - f(x - eps)) / 2eps per coordinate
/// against `analytic`; error |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> point,
                           std::span<const double> analytic, double eps = 1e-5, double floor = 1e-8);

/// Checks only the listed coordinates.
GradCheckResult grad_check_subset(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point, std::span<const double> analytic,
                                  std::span<const std::size_t> coords, double eps = 1e-5, double floor = 1e-8);

}  // namespace pseg::nn
