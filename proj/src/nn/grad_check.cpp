#include "pseg/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pseg/error.hpp"

namespace pseg::nn {

GradCheckResult grad_check_subset(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> point, std::span<const double> analytic,
                                  std::span<const std::size_t> coords, double eps, double floor) {
  if (!(eps > 0.0)) throw ValidationError("grad_check: eps must be > 0");
  if (analytic.size() != point.size()) throw ValidationError("grad_check: gradient size differs from point size");
  std::vector<double> x(point.begin(), point.end());
  GradCheckResult result;
  for (std::size_t i : coords) {
    if (i >= x.size()) throw ValidationError("grad_check: coordinate out of range");
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw ValidationError("grad_check: non-finite output at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (err >= result.max_rel_error) result = {err, i, a, numeric};
  }
  return result;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> point,
                           std::span<const double> analytic, double eps, double floor) {
  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  return grad_check_subset(f, point, analytic, coords, eps, floor);
}

}  // namespace pseg::nn
