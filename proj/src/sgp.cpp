#include "nevae/sgp.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "nevae/adam.h"
#include "nevae/error.h"
#include "nevae/parallel.h"

namespace nevae {

namespace {

/// Cholesky of k + jitter * variance * I, escalating jitter tenfold.
Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& k, double scale, double* used) {
  const Eigen::Index m = k.rows();
  for (double jitter = kMinJitter; jitter <= kMaxJitter * 1.0001; jitter *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(k + jitter * scale * Eigen::MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
      if ((diag.array() > 0.0).all() && diag.allFinite()) {
        if (used) *used = jitter;
        return llt;
      }
    }
  }
  throw NumericError("sparse GP: Cholesky failed even with jitter " + std::to_string(kMaxJitter));
}

struct Fitc {
  double jitter = 0.0;
  double log_marginal = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_kmm, chol_a;
  Eigen::VectorXd weights;
};

Fitc fitc(const Eigen::MatrixXd& x, const Eigen::VectorXd& r, const Eigen::MatrixXd& z,
          const KernelParams& kp) {
  const Eigen::Index n = x.rows(), m = z.rows();
  Fitc out;
  const Eigen::MatrixXd kmm = rbf_kernel_parallel(z, z, kp.variance, kp.lengthscale);
  const Eigen::MatrixXd kmn = rbf_kernel_parallel(z, x, kp.variance, kp.lengthscale);
  out.chol_kmm = robust_cholesky(kmm, kp.variance, &out.jitter);
  const Eigen::MatrixXd v = out.chol_kmm.matrixL().solve(kmn);  // m x n
  Eigen::VectorXd lambda(n);
  for (Eigen::Index i = 0; i < n; ++i)
    lambda[i] = std::max(kp.variance - v.col(i).squaredNorm(), 0.0) + kp.noise;
  const Eigen::VectorXd inv_lambda = lambda.cwiseInverse();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) + v * inv_lambda.asDiagonal() * v.transpose();
  out.chol_a = robust_cholesky(a, 1.0, nullptr);

  const Eigen::VectorXd b = v * inv_lambda.cwiseProduct(r);
  const Eigen::VectorXd c = out.chol_a.matrixL().solve(b);
  out.weights = out.chol_kmm.matrixU().solve(Eigen::VectorXd(out.chol_a.matrixU().solve(c)));

  const double quad = r.dot(inv_lambda.cwiseProduct(r)) - c.squaredNorm();
  double logdet = lambda.array().log().sum();
  const Eigen::VectorXd la = out.chol_a.matrixLLT().diagonal();
  logdet += 2.0 * la.array().log().sum();
  out.log_marginal =
      -0.5 * (quad + logdet + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
  return out;
}

void check_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() == 0) throw InputError("sparse GP: no training points");
  if (x.rows() != y.size())
    throw InputError("sparse GP: " + std::to_string(x.rows()) + " inputs but " +
                     std::to_string(y.size()) + " targets");
  if (!x.allFinite() || !y.allFinite()) throw InputError("sparse GP: non-finite training data");
}

void check_kernel(const KernelParams& k) {
  if (!(k.variance > 0.0 && k.lengthscale > 0.0 && k.noise > 0.0))
    throw InputError("sparse GP: kernel variance, lengthscale and noise must be positive");
}

KernelParams from_log(std::span<const double> p) {
  return {std::exp(p[0]), std::exp(p[1]), std::exp(p[2]) + 1e-8};
}

}  // namespace

double fitc_log_marginal(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::MatrixXd& inducing, const KernelParams& kernel) {
  check_data(x, y);
  check_kernel(kernel);
  const Eigen::VectorXd r = y.array() - y.mean();
  return fitc(x, r, inducing, kernel).log_marginal;
}

SgpModel SgpModel::fit_fixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& inducing, const KernelParams& kernel) {
  check_data(x, y);
  check_kernel(kernel);
  if (inducing.rows() == 0 || inducing.cols() != x.cols())
    throw InputError("sparse GP: inducing inputs do not match the data width");
  SgpModel model;
  model.kernel_ = kernel;
  model.inducing_ = inducing;
  model.prior_mean_ = y.mean();
  const Eigen::VectorXd r = y.array() - model.prior_mean_;
  Fitc f = fitc(x, r, inducing, kernel);
  model.jitter_ = f.jitter;
  model.log_marginal_ = f.log_marginal;
  model.chol_kmm_ = std::move(f.chol_kmm);
  model.chol_a_ = std::move(f.chol_a);
  model.weights_ = std::move(f.weights);
  return model;
}

SgpModel SgpModel::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SgpOptions& options) {
  check_data(x, y);
  check_kernel(options.initial);
  if (options.n_inducing == 0) throw InputError("sparse GP: need at least one inducing point");
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t m = std::min(options.n_inducing, n);

  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  std::sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
  Eigen::MatrixXd inducing(static_cast<Eigen::Index>(m), x.cols());
  for (std::size_t i = 0; i < m; ++i) inducing.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(ids[i]));

  KernelParams kernel = options.initial;
  if (options.optimize && options.iterations > 0) {
    const Eigen::VectorXd r = y.array() - y.mean();
    Tensor logp = Tensor::vector({std::log(kernel.variance), std::log(kernel.lengthscale),
                                  std::log(kernel.noise)});
    AdamState adam({options.learning_rate}, std::span<const Tensor>(&logp, 1));
    auto objective = [&](std::span<const double> p) {
      try {
        return fitc(x, r, inducing, from_log(p)).log_marginal;
      } catch (const NumericError&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    double best = objective(logp.data());
    Tensor best_p = logp;
    constexpr double h = 1e-5;
    for (std::size_t it = 0; it < options.iterations; ++it) {
      Tensor grad({3});
      for (std::size_t k = 0; k < 3; ++k) {
        Tensor up = logp, down = logp;
        up[k] += h;
        down[k] -= h;
        const double fu = objective(up.data()), fd = objective(down.data());
        grad[k] = std::isfinite(fu) && std::isfinite(fd) ? (fu - fd) / (2.0 * h) : 0.0;
      }
      Tensor* params[] = {&logp};
      adam_step(params, std::span<const Tensor>(&grad, 1), adam);
      // Keep the noise away from zero so the factorisation stays well posed.
      logp[2] = std::max(logp[2], std::log(1e-6));
      const double value = objective(logp.data());
      if (value > best) {
        best = value;
        best_p = logp;
      }
    }
    kernel = from_log(best_p.data());
  }
  return fit_fixed(x, y, inducing, kernel);
}

Prediction SgpModel::predict(const Eigen::VectorXd& xs) const {
  if (xs.size() != inducing_.cols())
    throw InputError("sparse GP: query width " + std::to_string(xs.size()) + ", expected " +
                     std::to_string(inducing_.cols()));
  const Eigen::MatrixXd q = xs.transpose();
  const Eigen::VectorXd kzm = rbf_kernel_serial(inducing_, q, kernel_.variance, kernel_.lengthscale).col(0);
  Prediction p;
  p.mean = prior_mean_ + kzm.dot(weights_);
  const Eigen::VectorXd t = chol_kmm_.matrixL().solve(kzm);
  const Eigen::VectorXd s = chol_a_.matrixL().solve(t);
  p.variance = std::max(kernel_.variance - t.squaredNorm() + s.squaredNorm(), 0.0);
  p.noisy_variance = p.variance + kernel_.noise;
  return p;
}

std::vector<Prediction> SgpModel::predict(const Eigen::MatrixXd& x) const {
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(predict(Eigen::VectorXd(x.row(i).transpose())));
  return out;
}

HeldOutMetrics SgpModel::evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
  if (x.rows() == 0 || x.rows() != y.size()) throw InputError("sparse GP: bad held-out set");
  HeldOutMetrics m;
  const auto preds = predict(x);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Prediction& p = preds[static_cast<std::size_t>(i)];
    const double err = y[i] - p.mean;
    m.rmse += err * err;
    m.log_likelihood += -0.5 * (std::log(2.0 * std::numbers::pi * p.noisy_variance) +
                                err * err / p.noisy_variance);
  }
  const double count = static_cast<double>(y.size());
  m.rmse = std::sqrt(m.rmse / count);
  m.log_likelihood /= count;
  return m;
}

double expected_improvement(double mean, double variance, double best) {
  if (variance < 0.0) throw InputError("expected improvement: negative variance");
  const double sigma = std::sqrt(variance);
  if (sigma == 0.0) return std::max(mean - best, 0.0);
  const double z = (mean - best) / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return std::max(sigma * (z * cdf + pdf), 0.0);
}

}  // namespace nevae
