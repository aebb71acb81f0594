#pragma once

// FITC sparse Gaussian process regression with an RBF kernel.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace nevae {

struct KernelParams {
  double variance = 1.0;
  double lengthscale = 1.0;
  double noise = 0.1;  // observation noise variance
};

struct SgpOptions {
  std::size_t n_inducing = 100;  // clamped to the training size
  bool optimize = true;
  std::size_t iterations = 100;
  double learning_rate = 0.05;
  KernelParams initial;
  std::uint64_t seed = 0;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;        // latent function variance
  double noisy_variance = 0.0;  // plus observation noise
};

struct HeldOutMetrics {
  double log_likelihood = 0.0;  // mean per-point predictive log density
  double rmse = 0.0;
};

inline constexpr double kMinJitter = 1e-10;
inline constexpr double kMaxJitter = 1e-6;

class SgpModel {
 public:
  /// Inducing rows are drawn from X without replacement; kernel parameters
  /// are fitted by ascent on the FITC log marginal likelihood when
  /// options.optimize is set. Throws InputError on bad sizes and
  /// NumericError when no jitter up to kMaxJitter makes the factorisation work.
  static SgpModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SgpOptions& options);
  /// Fixed kernel parameters and inducing inputs.
  static SgpModel fit_fixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& inducing, const KernelParams& kernel);

  Prediction predict(const Eigen::VectorXd& x) const;
  std::vector<Prediction> predict(const Eigen::MatrixXd& x) const;
  double log_marginal_likelihood() const { return log_marginal_; }
  HeldOutMetrics evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const;

  const KernelParams& kernel() const { return kernel_; }
  const Eigen::MatrixXd& inducing() const { return inducing_; }
  double prior_mean() const { return prior_mean_; }
  double jitter() const { return jitter_; }

 private:
  KernelParams kernel_;
  Eigen::MatrixXd inducing_;
  double prior_mean_ = 0.0;
  double jitter_ = 0.0;
  double log_marginal_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_kmm_;
  Eigen::LLT<Eigen::MatrixXd> chol_a_;  // I + V Lambda^-1 V^T, V = Lm^-1 Kmn
  Eigen::VectorXd weights_;             // Kmm-space weights for the mean
};

/// FITC log marginal likelihood for given data, inducing set and kernel.
double fitc_log_marginal(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::MatrixXd& inducing, const KernelParams& kernel);

/// sigma [z Phi(z) + phi(z)], z = (mean - best) / sigma, for maximisation;
/// max(mean - best, 0) when the variance is zero.
double expected_improvement(double mean, double variance, double best);

}  // namespace nevae
