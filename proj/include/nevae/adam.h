#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nevae/tensor.h"

namespace nevae {

struct AdamOptions {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a fixed list of parameter tensors.
struct AdamState {
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;

  AdamState() = default;
  AdamState(AdamOptions opts, std::span<const Tensor> params);
};

/// One Adam step in the *ascent* direction: each parameter moves along its
/// bias-corrected gradient estimate, so pass gradients of the objective being
/// maximized. Throws NumericError (leaving params and state untouched) if a
/// gradient holds NaN or Inf.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace nevae
