#pragma once

#include <functional>
#include <span>
#include <string>

namespace cmpg {

struct FdReport {
  double max_rel_err = 0.0;
  int worst_index = -1;
  bool finite = true;
  int bad_index = -1;

  bool ok(double tol) const { return finite && max_rel_err < tol; }
  std::string describe() const;
};

// Compares an analytic gradient against central finite differences of f.
// Relative error per component: |analytic - fd| / max(1, |fd|). Params are
// perturbed in place and restored. A non-finite f value at a perturbed point
// is reported through `finite` and `bad_index` instead of propagating.
FdReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                           std::span<double> params,
                           std::span<const double> analytic, double step);

}  // namespace cmpg
