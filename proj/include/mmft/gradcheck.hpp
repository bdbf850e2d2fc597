#pragma once

#include "mmft/parameters.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mmft {

struct GradCheckOptions {
  Scalar step = 1e-5;
  /// Denominator floor for the relative error, so entries where both the
  /// analytic and numeric gradient are ~0 are judged on absolute error.
  Scalar floor = 1e-5;
};

struct ParameterGradError {
  std::string name;
  Index worst_element = 0;
  Scalar analytic = 0;
  Scalar numeric = 0;
  Scalar max_rel_error = 0;
};

struct GradCheckReport {
  std::vector<ParameterGradError> per_parameter;
  Scalar max_rel_error = 0;
  std::string worst_parameter;
  std::size_t elements_checked = 0;
  Scalar loss = 0;

  bool passed(Scalar tol) const { return max_rel_error < tol; }
};

Scalar relative_error(Scalar analytic, Scalar numeric, Scalar floor);

/// Compares reverse-mode gradients of `loss` against central differences for
/// every element of every parameter in `params`. `loss` must build a fresh
/// graph on the tape it is handed and return a 1x1 node.
GradCheckReport check_parameter_gradients(ParameterStore& params,
                                          const std::function<Var(Tape&)>& loss,
                                          const GradCheckOptions& opts = {});

}  // namespace mmft
