#pragma once

// Batch kernels in two flavours: an OpenMP version used by the library and a
// serial reference used to check it. Both reduce per-item results in index
// order, so they agree bit for bit.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nevae/decoder.h"
#include "nevae/training.h"

namespace nevae {

/// Worker count: NEVAE_THREADS when set to a positive integer, otherwise the
/// OpenMP default.
int configured_threads();

struct BatchResult {
  double mean_elbo = 0.0;
  std::vector<Tensor> grads;  // mean over the batch, ModelParams::tensors() order
};

/// Graph corpus[i] is evaluated with seed derive_seed(seed, i).
BatchResult batch_elbo_serial(std::span<const MolecularGraph> corpus,
                              std::span<const std::size_t> indices, const ModelParams& params,
                              const Hyperparams& hyper, std::uint64_t seed);
BatchResult batch_elbo_parallel(std::span<const MolecularGraph> corpus,
                                std::span<const std::size_t> indices, const ModelParams& params,
                                const Hyperparams& hyper, std::uint64_t seed);

/// Mean ELBO without gradients.
double batch_elbo_values_serial(std::span<const MolecularGraph> corpus,
                                std::span<const std::size_t> indices, const ModelParams& params,
                                const Hyperparams& hyper, std::uint64_t seed);
double batch_elbo_values_parallel(std::span<const MolecularGraph> corpus,
                                  std::span<const std::size_t> indices, const ModelParams& params,
                                  const Hyperparams& hyper, std::uint64_t seed);

/// Prior samples; sample i uses seed derive_seed(seed, i).
std::vector<Sample> sample_graphs_serial(const ModelParams& params, std::size_t count,
                                         const SampleOptions& options, std::uint64_t seed);
std::vector<Sample> sample_graphs_parallel(const ModelParams& params, std::size_t count,
                                           const SampleOptions& options, std::uint64_t seed);

/// k(a_i, b_j) = variance * exp(-|a_i - b_j|^2 / (2 lengthscale^2)).
Eigen::MatrixXd rbf_kernel_serial(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double variance, double lengthscale);
Eigen::MatrixXd rbf_kernel_parallel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    double variance, double lengthscale);

}  // namespace nevae
