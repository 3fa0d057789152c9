#include "cpr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cpr {
namespace {

void check_tensor(const std::function<double()>& loss, Tensor& point, const Tensor& analytic,
                  const std::string& name, double h, double tol, GradCheckReport& report) {
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double plus = loss();
    point[i] = saved - h;
    const double minus = loss();
    point[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++report.coordinates;
    if (report.coordinates == 1 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = name;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error <= tol;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<double()>& loss, ParamStore& params,
                                  double h, double tol) {
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) analytic.push_back(p.grad);
  GradCheckReport report;
  std::size_t k = 0;
  for (auto& [name, p] : params) {
    check_tensor(loss, p.value, analytic[k++], name, h, tol, report);
  }
  return report;
}

GradCheckReport finite_diff_check(const std::function<double()>& loss, Tensor& point,
                                  const Tensor& analytic, double h, double tol) {
  const Tensor snapshot = analytic;
  GradCheckReport report;
  check_tensor(loss, point, snapshot, "point", h, tol, report);
  return report;
}

}  // namespace cpr
