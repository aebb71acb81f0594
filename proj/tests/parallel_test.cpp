#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "nevae/error.h"
#include "nevae/parallel.h"

namespace nevae {
namespace {

TEST(Parallel, BatchElboMatchesSerialBitwise) {
  const auto corpus = generate_desk_corpus(40, 12, 11);
  const Hyperparams hyper = Hyperparams::molecule_defaults();
  const ModelParams params = ModelParams::init(hyper.dims, 2);
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const BatchResult s = batch_elbo_serial(corpus, idx, params, hyper, 5);
  const BatchResult p = batch_elbo_parallel(corpus, idx, params, hyper, 5);
  EXPECT_EQ(s.mean_elbo, p.mean_elbo);
  ASSERT_EQ(s.grads.size(), p.grads.size());
  for (std::size_t i = 0; i < s.grads.size(); ++i) EXPECT_EQ(s.grads[i], p.grads[i]);
  EXPECT_EQ(batch_elbo_values_serial(corpus, idx, params, hyper, 5),
            batch_elbo_values_parallel(corpus, idx, params, hyper, 5));
  EXPECT_EQ(batch_elbo_values_serial(corpus, idx, params, hyper, 5), s.mean_elbo);
}

TEST(Parallel, SamplesMatchSerial) {
  ModelParams params = ModelParams::init({5, 3, 8}, 3);
  params.lambda_n = 9;
  const auto s = sample_graphs_serial(params, 200, {}, 17);
  const auto p = sample_graphs_parallel(params, 200, {}, 17);
  ASSERT_EQ(s.size(), p.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s[i].graph, p[i].graph);
    EXPECT_EQ(s[i].trace.total_logprob(), p[i].trace.total_logprob());
  }
}

TEST(Parallel, KernelMatchesSerial) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(70, 4), b(33, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = normal(rng);
  const Eigen::MatrixXd s = rbf_kernel_serial(a, b, 1.7, 0.8);
  EXPECT_EQ(s, rbf_kernel_parallel(a, b, 1.7, 0.8));
  EXPECT_NEAR(s(3, 5), 1.7 * std::exp(-(a.row(3) - b.row(5)).squaredNorm() / (2 * 0.64)), 1e-15);
}

TEST(Parallel, ThreadCountFromEnvironment) {
  setenv("NEVAE_THREADS", "3", 1);
  EXPECT_EQ(configured_threads(), 3);
  setenv("NEVAE_THREADS", "bogus", 1);
  EXPECT_GE(configured_threads(), 1);
  setenv("NEVAE_THREADS", "1", 1);
  const auto corpus = generate_desk_corpus(12, 10, 4);
  const Hyperparams hyper = Hyperparams::molecule_defaults();
  const ModelParams params = ModelParams::init(hyper.dims, 1);
  std::vector<std::size_t> idx = {0, 3, 5, 7};
  const double one = batch_elbo_values_parallel(corpus, idx, params, hyper, 2);
  setenv("NEVAE_THREADS", "4", 1);
  EXPECT_EQ(one, batch_elbo_values_parallel(corpus, idx, params, hyper, 2));
  unsetenv("NEVAE_THREADS");
}

TEST(Parallel, LowestIndexErrorRethrown) {
  const auto corpus = generate_desk_corpus(4, 10, 4);
  const Hyperparams hyper = Hyperparams::molecule_defaults();
  const ModelParams params = ModelParams::init(hyper.dims, 1);
  std::vector<std::size_t> idx = {0, 99};
  EXPECT_THROW(batch_elbo_parallel(corpus, idx, params, hyper, 0), InputError);
  EXPECT_THROW(batch_elbo_parallel(corpus, {}, params, hyper, 0), InputError);
}

}  // namespace
}  // namespace nevae
