#include "rkp/gradcheck.hpp"

#include <cmath>

#include "rkp/error.hpp"

namespace rkp::ad {

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs, double tolerance,
                           double step) {
  std::vector<Tensor> probes;
  probes.reserve(inputs.size());
  for (const auto& in : inputs) probes.push_back(Tensor::from(in.shape(), in.value(), true));

  const Tensor out = f(probes);
  if (out.numel() != 1) throw ContractError("grad_check: function is not scalar-valued");
  out.backward();

  std::vector<Eigen::ArrayXd> analytic;
  for (const auto& p : probes)
    analytic.push_back(p.grad().size() == p.numel() ? p.grad() : Eigen::ArrayXd::Zero(p.numel()));

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    Eigen::ArrayXd& v = probes[i].mutable_value();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double saved = v[k];
      v[k] = saved + step;
      const double up = f(probes).item();
      v[k] = saved - step;
      const double down = f(probes).item();
      v[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::abs(analytic[i][k] - numeric) / (std::abs(analytic[i][k]) + 1e-6);
      ++report.checked;
      if (!(rel < tolerance)) ++report.failures;
      if (rel > report.max_relative_error || std::isnan(rel)) {
        report.max_relative_error = std::isnan(rel) ? INFINITY : rel;
        report.worst_input = i;
        report.worst_element = k;
      }
    }
  }
  return report;
}

}  // namespace rkp::ad
