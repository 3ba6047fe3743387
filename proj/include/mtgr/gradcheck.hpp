#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mtgr/tensor.hpp"

namespace mtgr {

struct GradCheckReport {
  double max_relative_error = 0.0;
  /// Worst error per parameter, aligned with the input parameter list.
  std::vector<double> per_param;
  std::size_t coordinates = 0;

  bool empty() const { return per_param.empty(); }
};

/// Relative error with a floor on the denominator so coordinates whose true
/// gradient is ~0 are judged on an absolute 1e-3 scale instead of blowing up.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares grad() against central differences coordinate by coordinate.
/// `f` rebuilds the graph from fresh parameter leaves on every call.
template <typename Scalar>
GradCheckReport finite_diff_check(const std::function<Tensor<Scalar>(const std::vector<Tensor<Scalar>>&)>& f,
                                  const std::vector<Matrix<Scalar>>& params, Scalar step) {
  if (!(step > Scalar(0))) throw ContractError("finite_diff_check: step must be positive");
  GradCheckReport report;
  if (params.empty()) return report;

  auto make_leaves = [](const std::vector<Matrix<Scalar>>& values) {
    std::vector<Tensor<Scalar>> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) leaves.push_back(Tensor<Scalar>::parameter(v));
    return leaves;
  };

  auto leaves = make_leaves(params);
  const auto analytic = grad(f(leaves), leaves);

  std::vector<Matrix<Scalar>> work = params;
  report.per_param.assign(params.size(), 0.0);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Index i = 0; i < params[p].size(); ++i) {
      const Scalar original = work[p](i);
      work[p](i) = original + step;
      const Scalar up = f(make_leaves(work)).item();
      work[p](i) = original - step;
      const Scalar down = f(make_leaves(work)).item();
      work[p](i) = original;
      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * static_cast<double>(step));
      const double err = relative_error(static_cast<double>(analytic[p](i)), numeric);
      report.per_param[p] = std::max(report.per_param[p], err);
      report.max_relative_error = std::max(report.max_relative_error, err);
      ++report.coordinates;
    }
  }
  return report;
}

}  // namespace mtgr
