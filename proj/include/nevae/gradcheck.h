#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nevae/tensor.h"

namespace nevae {

/// Builds a scalar loss on `tape` from parameter leaves. Must be deterministic.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares tape gradients with central differences of step `h` on every
/// coordinate. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult finite_diff_check(const LossBuilder& loss_fn, std::span<const Tensor> params,
                                  double h = 1e-5, double floor = 1e-2);

}  // namespace nevae
