#include "mvgmn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mvgmn/errors.hpp"

namespace mvgmn {

namespace {

double eval_loss(const LossFn& loss_fn, const ParamStore& params) {
  Tape tape(params, false);
  const Var loss = loss_fn(tape);
  if (loss.value().size() != 1) throw DimensionError("gradient check needs a scalar loss");
  const double v = loss.value()[0];
  if (!std::isfinite(v)) throw NumericError("non-finite loss during gradient check");
  return v;
}

}  // namespace

GradCheckReport check_gradients(const LossFn& loss_fn, ParamStore& params, double h,
                                double floor) {
  std::vector<Tensor> analytic;
  {
    Tape tape(params, true);
    const Var loss = loss_fn(tape);
    tape.backward(loss);
    for (ParamId id = 0; id < params.size(); ++id) analytic.push_back(tape.param_grad(id));
  }

  GradCheckReport report;
  for (ParamId id = 0; id < params.size(); ++id) {
    Tensor& value = params.value(id);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = eval_loss(loss_fn, params);
      value[i] = saved - h;
      const double down = eval_loss(loss_fn, params);
      value[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[id][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || report.worst_param.empty()) {
        report.max_relative_error = std::max(rel, report.max_relative_error);
        report.worst_param = params.name(id);
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mvgmn
