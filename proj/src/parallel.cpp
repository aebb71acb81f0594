#include "nevae/parallel.h"

#include <cstdlib>
#include <exception>
#include <string>

#include <omp.h>

#include "nevae/error.h"

namespace nevae {

int configured_threads() {
  if (const char* env = std::getenv("NEVAE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return omp_get_max_threads();
}

namespace {

/// Runs body(i) for i in [0, count), in parallel when `parallel`. The first
/// exception (lowest index) is rethrown after the loop.
template <typename Body>
void for_each_index(std::size_t count, bool parallel, Body&& body) {
  std::vector<std::exception_ptr> errors(count);
  const long long n = static_cast<long long>(count);
  if (parallel) {
#pragma omp parallel for schedule(dynamic) num_threads(configured_threads())
    for (long long i = 0; i < n; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (long long i = 0; i < n; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

BatchResult batch_elbo(std::span<const MolecularGraph> corpus, std::span<const std::size_t> indices,
                       const ModelParams& params, const Hyperparams& hyper, std::uint64_t seed,
                       bool parallel) {
  if (indices.empty()) throw InputError("batch_elbo: empty batch");
  std::vector<ElboGradient> items(indices.size());
  for_each_index(indices.size(), parallel, [&](std::size_t i) {
    const std::size_t g = indices[i];
    if (g >= corpus.size()) throw InputError("batch_elbo: graph index out of range");
    items[i] = elbo_gradient(corpus[g], params, hyper, derive_seed(seed, g));
  });

  BatchResult out;
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.grads = std::move(items[0].grads);
  out.mean_elbo = items[0].value;
  for (std::size_t i = 1; i < items.size(); ++i) {
    out.mean_elbo += items[i].value;
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      auto dst = out.grads[p].data();
      auto src = items[i].grads[p].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  out.mean_elbo /= static_cast<double>(indices.size());
  for (Tensor& g : out.grads)
    for (double& v : g.data()) v *= inv;
  return out;
}

double batch_values(std::span<const MolecularGraph> corpus, std::span<const std::size_t> indices,
                    const ModelParams& params, const Hyperparams& hyper, std::uint64_t seed,
                    bool parallel) {
  if (indices.empty()) throw InputError("batch_elbo: empty batch");
  std::vector<double> values(indices.size());
  for_each_index(indices.size(), parallel, [&](std::size_t i) {
    const std::size_t g = indices[i];
    if (g >= corpus.size()) throw InputError("batch_elbo: graph index out of range");
    values[i] = elbo_value(corpus[g], params, hyper, derive_seed(seed, g));
  });
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

std::vector<Sample> sample_many(const ModelParams& params, std::size_t count,
                                const SampleOptions& options, std::uint64_t seed, bool parallel) {
  std::vector<Sample> out(count);
  for_each_index(count, parallel, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    out[i] = sample_graph(params, rng, options);
  });
  return out;
}

Eigen::MatrixXd rbf(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double variance,
                    double lengthscale, bool parallel) {
  if (a.cols() != b.cols())
    throw ShapeError("rbf_kernel: input widths " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.cols()));
  Eigen::MatrixXd k(a.rows(), b.rows());
  const double scale = -0.5 / (lengthscale * lengthscale);
  const long long rows = a.rows();
  auto row = [&](long long i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = variance * std::exp(scale * (a.row(i) - b.row(j)).squaredNorm());
  };
  if (parallel) {
#pragma omp parallel for schedule(static) num_threads(configured_threads())
    for (long long i = 0; i < rows; ++i) row(i);
  } else {
    for (long long i = 0; i < rows; ++i) row(i);
  }
  return k;
}

}  // namespace

BatchResult batch_elbo_serial(std::span<const MolecularGraph> corpus,
                              std::span<const std::size_t> indices, const ModelParams& params,
                              const Hyperparams& hyper, std::uint64_t seed) {
  return batch_elbo(corpus, indices, params, hyper, seed, false);
}

BatchResult batch_elbo_parallel(std::span<const MolecularGraph> corpus,
                                std::span<const std::size_t> indices, const ModelParams& params,
                                const Hyperparams& hyper, std::uint64_t seed) {
  return batch_elbo(corpus, indices, params, hyper, seed, true);
}

double batch_elbo_values_serial(std::span<const MolecularGraph> corpus,
                                std::span<const std::size_t> indices, const ModelParams& params,
                                const Hyperparams& hyper, std::uint64_t seed) {
  return batch_values(corpus, indices, params, hyper, seed, false);
}

double batch_elbo_values_parallel(std::span<const MolecularGraph> corpus,
                                  std::span<const std::size_t> indices, const ModelParams& params,
                                  const Hyperparams& hyper, std::uint64_t seed) {
  return batch_values(corpus, indices, params, hyper, seed, true);
}

std::vector<Sample> sample_graphs_serial(const ModelParams& params, std::size_t count,
                                         const SampleOptions& options, std::uint64_t seed) {
  return sample_many(params, count, options, seed, false);
}

std::vector<Sample> sample_graphs_parallel(const ModelParams& params, std::size_t count,
                                           const SampleOptions& options, std::uint64_t seed) {
  return sample_many(params, count, options, seed, true);
}

Eigen::MatrixXd rbf_kernel_serial(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double variance, double lengthscale) {
  return rbf(a, b, variance, lengthscale, false);
}

Eigen::MatrixXd rbf_kernel_parallel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    double variance, double lengthscale) {
  return rbf(a, b, variance, lengthscale, true);
}

}  // namespace nevae
