#include "cmpg/fdcheck.hpp"

#include <cmath>

#include "cmpg/errors.hpp"

namespace cmpg {

std::string FdReport::describe() const {
  if (!finite)
    return "non-finite objective at perturbed parameter index " + std::to_string(bad_index);
  return "max rel err " + std::to_string(max_rel_err) + " at parameter index " +
         std::to_string(worst_index);
}

FdReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                           std::span<double> params,
                           std::span<const double> analytic, double step) {
  if (step <= 0.0) throw UsageError("finite_diff_check: step must be positive");
  if (params.size() != analytic.size())
    throw UsageError("finite_diff_check: gradient size mismatch");
  FdReport rep;
  for (size_t i = 0; i < params.size(); ++i) {
    double keep = params[i];
    params[i] = keep + step;
    double fp = f(params);
    params[i] = keep - step;
    double fm = f(params);
    params[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      rep.finite = false;
      rep.bad_index = int(i);
      return rep;
    }
    double fd = (fp - fm) / (2.0 * step);
    double rel = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = int(i);
    }
  }
  return rep;
}

}  // namespace cmpg
