#include "nevae/gradcheck.h"

#include <algorithm>
#include <cmath>

namespace nevae {

namespace {

double evaluate(const LossBuilder& loss_fn, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& p : params) vars.push_back(tape.variable(p));
  return loss_fn(tape, vars).value().item();
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& loss_fn, std::span<const Tensor> params,
                                  double h, double floor) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.variable(p));
    analytic = tape.gradients(loss_fn(tape, vars), vars);
  }

  GradCheckResult result;
  std::vector<Tensor> work(params.begin(), params.end());
  for (std::size_t i = 0; i < work.size(); ++i) {
    for (std::size_t j = 0; j < work[i].size(); ++j) {
      const double orig = work[i][j];
      work[i][j] = orig + h;
      const double up = evaluate(loss_fn, work);
      work[i][j] = orig - h;
      const double down = evaluate(loss_fn, work);
      work[i][j] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (err > result.max_relative_error || (i == 0 && j == 0)) {
        result = {err, i, j, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace nevae
