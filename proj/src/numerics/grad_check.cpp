#include "numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace elcorec::nn {

namespace {
double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss evaluated to a non-finite value");
  return v;
}
}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss, ParamStore& params, double eps, double floor) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("grad_check: eps must lie in [1e-7, 1e-3]");
  params.zero_grad();
  const Tensor root = loss();
  if (!std::isfinite(root.item())) throw NumericError("grad_check: loss evaluated to a non-finite value");
  root.backward();

  GradCheckReport report;
  for (auto& [name, entry] : params.entries()) {
    Tensor& p = entry.tensor;
    if (!p.requires_grad()) continue;
    std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                : std::vector<double>(p.size(), 0.0);
    auto w = p.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double up = evaluate(loss);
      w[i] = orig - eps;
      const double down = evaluate(loss);
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++report.coordinates;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  params.zero_grad();
  return report;
}

}  // namespace elcorec::nn
