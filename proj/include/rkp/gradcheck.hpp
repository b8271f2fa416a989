#pragma once

#include <functional>
#include <vector>

#include "rkp/tensor.hpp"

namespace rkp::ad {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  Eigen::Index worst_element = 0;
  std::size_t failures = 0;
  std::size_t checked = 0;
  bool passed() const { return failures == 0; }
};

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of a scalar function against central differences at every
/// coordinate of every input. Relative error is |analytic - numeric| / (|analytic| + 1e-6).
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs, double tolerance,
                           double step = 1e-4);

}  // namespace rkp::ad
