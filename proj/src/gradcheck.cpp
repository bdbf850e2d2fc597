#include "mmft/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mmft {

Scalar relative_error(Scalar analytic, Scalar numeric, Scalar floor) {
  const Scalar denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_parameter_gradients(ParameterStore& params,
                                          const std::function<Var(Tape&)>& loss,
                                          const GradCheckOptions& opts) {
  GradCheckReport report;
  params.zero_grad();
  {
    Tape tape;
    Var root = loss(tape);
    report.loss = root.scalar();
    tape.backward(root);
    tape.accumulate_parameter_grads(params);
  }

  auto evaluate = [&]() {
    Tape tape;
    tape.set_grad_enabled(false);
    return loss(tape).scalar();
  };

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    ParameterGradError entry{p.name()};
    for (Index e = 0; e < p.value.size(); ++e) {
      Scalar& w = p.value.data()[e];
      const Scalar saved = w;
      w = saved + opts.step;
      const Scalar up = evaluate();
      w = saved - opts.step;
      const Scalar down = evaluate();
      w = saved;
      const Scalar numeric = (up - down) / (2.0 * opts.step);
      const Scalar analytic = p.grad.data()[e];
      const Scalar err = relative_error(analytic, numeric, opts.floor);
      if (e == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_element = e;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
      ++report.elements_checked;
    }
    if (report.worst_parameter.empty() || entry.max_rel_error > report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_parameter = entry.name;
    }
    report.per_parameter.push_back(std::move(entry));
  }
  params.zero_grad();
  return report;
}

}  // namespace mmft
