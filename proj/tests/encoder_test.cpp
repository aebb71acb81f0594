#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nevae/encoder.h"
#include "nevae/error.h"
#include "nevae/training.h"
#include "test_util.h"

namespace nevae {
namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

double softplus_ref(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Loop-based reference for the hop embeddings and the posterior heads.
std::vector<Matrix> embed_reference(const MolecularGraph& g, const ModelParams& p) {
  const std::size_t n = g.size(), d = p.dims.latent;
  std::vector<Matrix> hops;
  for (std::size_t k = 0; k < p.dims.hops; ++k) {
    const Matrix w = to_matrix(p.encoder.hop_weights[k]);
    Matrix c(n, std::vector<double>(d, 0.0));
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t type = static_cast<std::size_t>(g.atom(static_cast<int>(u)));
      for (std::size_t j = 0; j < d; ++j) {
        double self = w[type][j];
        if (k == 0) {
          c[u][j] = self;
          continue;
        }
        double agg = 0.0;
        for (auto [v, order] : g.neighbors(static_cast<int>(u))) agg += order * hops[k - 1][v][j];
        c[u][j] = self * agg;
      }
    }
    hops.push_back(c);
  }
  return hops;
}

std::vector<double> dense_ref(const std::vector<double>& x, const Dense& layer) {
  std::vector<double> y(layer.bias.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    y[j] = layer.bias[j];
    for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * layer.weight(i, j);
  }
  return y;
}

TEST(Embed, IsolatedNodeHasZeroHigherHops) {
  const ModelParams p = ModelParams::init({5, 3, 8}, 1);
  const auto hops = embed(MolecularGraph({Atom::C}), p);
  ASSERT_EQ(hops.size(), 3u);
  for (std::size_t k = 1; k < 3; ++k)
    for (double v : hops[k].data()) EXPECT_EQ(v, 0.0);
  EXPECT_NE(hops[0](0, 0), 0.0);
}

TEST(Embed, ThreeNodePathIdentityWeights) {
  ModelParams p = ModelParams::init({4, 3, 8}, 1);
  for (auto& w : p.encoder.hop_weights) w = Tensor::identity(4);
  std::vector<Bond> bonds = {{0, 1, 1}, {1, 2, 1}};
  const auto hops = embed(MolecularGraph({Atom::C, Atom::C, Atom::C}, bonds), p);
  // c(1) rows are e_C; c(2) = e_C * degree; c(3) = e_C * sum of neighbour degrees.
  const double expect2[] = {1, 2, 1};
  const double expect3[] = {2, 2, 2};
  for (int u = 0; u < 3; ++u) {
    EXPECT_EQ(hops[0](u, 0), 1.0);
    EXPECT_EQ(hops[1](u, 0), expect2[u]);
    EXPECT_EQ(hops[2](u, 0), expect3[u]);
    for (int j = 1; j < 4; ++j) EXPECT_EQ(hops[2](u, j), 0.0);
  }
}

TEST(Embed, MatchesLoopReference) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelParams p = ModelParams::init({5, 4, 8}, 100 + trial);
    const MolecularGraph g = testing::random_connected_graph(2 + trial % 9, trial % 4, rng);
    const auto hops = embed(g, p);
    const auto ref = embed_reference(g, p);
    for (std::size_t k = 0; k < hops.size(); ++k)
      for (std::size_t u = 0; u < g.size(); ++u)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(hops[k](u, j), ref[k][u][j], 1e-12);

    const Posterior post = posterior(g, p);
    for (std::size_t u = 0; u < g.size(); ++u) {
      std::vector<double> cat;
      for (const auto& c : ref) cat.insert(cat.end(), c[u].begin(), c[u].end());
      auto h = dense_ref(cat, p.encoder.hidden);
      for (double& v : h) v = softplus_ref(v);
      const auto mu = dense_ref(h, p.encoder.mu);
      const auto s = dense_ref(h, p.encoder.sigma);
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_NEAR(post.mu(u, j), mu[j], 1e-10);
        EXPECT_NEAR(post.sigma(u, j), softplus_ref(s[j]) + kSigmaFloor, 1e-10);
      }
    }
  }
}

TEST(Embed, Errors) {
  ModelParams p = ModelParams::init({5, 2, 8}, 1);
  EXPECT_THROW(embed(MolecularGraph(), p), InputError);
  p.encoder.hop_weights.clear();
  EXPECT_THROW(embed(MolecularGraph({Atom::C}), p), InputError);
  EXPECT_THROW(node_features(MolecularGraph({Atom::C}), 3), InputError);
}

TEST(Posterior, PermutationEquivariantExactly) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const ModelParams p = ModelParams::init({5, 5, 16}, trial);
    const MolecularGraph g = testing::random_connected_graph(2 + trial % 15, trial % 6, rng);
    const auto perm = testing::random_permutation(g.size(), rng);
    const MolecularGraph h = g.relabeled(perm);
    const auto cg = embed(g, p), ch = embed(h, p);
    const Posterior pg = posterior(g, p), ph = posterior(h, p);
    for (std::size_t u = 0; u < g.size(); ++u)
      for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t k = 0; k < 5; ++k) ASSERT_EQ(cg[k](u, j), ch[k](perm[u], j));
        ASSERT_EQ(pg.mu(u, j), ph.mu(perm[u], j));
        ASSERT_EQ(pg.sigma(u, j), ph.sigma(perm[u], j));
      }
  }
}

TEST(Posterior, ZeroHeadWeightsConstantPerAtomType) {
  ModelParams p = ModelParams::init({5, 3, 8}, 3);
  for (Dense* d : {&p.encoder.hidden, &p.encoder.mu, &p.encoder.sigma}) {
    d->weight = Tensor(d->weight.shape());
    d->bias = Tensor(d->bias.shape());
  }
  std::mt19937_64 rng(1);
  const MolecularGraph g = testing::random_connected_graph(8, 2, rng);
  const Posterior post = posterior(g, p);
  for (std::size_t u = 0; u < g.size(); ++u)
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(post.mu(u, j), 0.0);
      EXPECT_DOUBLE_EQ(post.sigma(u, j), std::log(2.0) + kSigmaFloor);
    }
}

TEST(Posterior, SigmaPositiveForRandomParams) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    ModelParams p = ModelParams::init({6, 3, 8}, trial);
    for (double& v : p.encoder.sigma.bias.storage()) v = -40.0;
    const Posterior post = posterior(testing::random_connected_graph(5, 2, rng), p);
    for (double s : post.sigma.data()) EXPECT_GT(s, 0.0);
  }
}

TEST(Sample, ZeroSigmaReturnsMean) {
  Posterior post{Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor({2, 2})};
  std::mt19937_64 rng(0);
  EXPECT_EQ(sample_latent(post, rng), post.mu);
}

TEST(Sample, MonteCarloMeanWithinThreeSigma) {
  Posterior post{Tensor::matrix(2, 3, {0.5, -1.0, 2.0, 0.0, 3.0, -0.2}),
                 Tensor::matrix(2, 3, {1.0, 0.3, 2.0, 0.1, 0.7, 1.5})};
  std::mt19937_64 rng(77);
  const int draws = 100000;
  Tensor sum({2, 3});
  for (int i = 0; i < draws; ++i) {
    const Tensor z = sample_latent(post, rng);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += z[k];
  }
  for (std::size_t k = 0; k < sum.size(); ++k)
    EXPECT_LE(std::abs(sum[k] / draws - post.mu[k]), 3.0 * post.sigma[k] / std::sqrt(draws));
}

TEST(Sample, SeedReproducibleAndNoiseRecorded) {
  std::mt19937_64 g(1);
  const ModelParams p = ModelParams::init({5, 2, 8}, 9);
  const Posterior post = posterior(testing::random_connected_graph(6, 1, g), p);
  std::mt19937_64 a(5), b(5);
  Tensor eps;
  const Tensor za = sample_latent(post, a, &eps);
  EXPECT_EQ(za, sample_latent(post, b));
  for (std::size_t k = 0; k < za.size(); ++k) EXPECT_EQ(za[k], post.mu[k] + post.sigma[k] * eps[k]);
}

TEST(Params, CountIndependentOfGraphSize) {
  const ModelParams p = ModelParams::init({5, 5, 16}, 0);
  const std::size_t count = p.num_scalars();
  std::size_t encoder = 0;
  for (const auto& w : p.encoder.hop_weights) encoder += w.size();
  EXPECT_EQ(encoder, 5u * 5u * 5u);
  std::mt19937_64 rng(0);
  for (std::size_t n : {1u, 5u, 40u}) {
    ASSERT_NO_THROW(posterior(testing::random_connected_graph(n, 3, rng), p));
    EXPECT_EQ(p.num_scalars(), count);
  }
  EXPECT_EQ(ModelParams::init({5, 5, 16}, 99).num_scalars(), count);
}

TEST(Gradient, EveryHopWeightReachedOnLongPath) {
  Hyperparams hyper = Hyperparams::molecule_defaults();
  hyper.mask = MaskConfig::none();
  const ModelParams p = ModelParams::init(hyper.dims, 4);
  std::vector<Bond> bonds;
  for (int i = 0; i + 1 < 7; ++i) bonds.push_back({i, i + 1, 1});
  const MolecularGraph chain(std::vector<Atom>(7, Atom::C), bonds);
  const ElboGradient grad = elbo_gradient(chain, p, hyper, 1);
  for (std::size_t k = 0; k < hyper.dims.hops; ++k) {
    double norm = 0.0;
    for (double v : grad.grads[k].data()) norm += v * v;
    EXPECT_GT(norm, 0.0) << "hop " << k + 1;
  }
}

}  // namespace
}  // namespace nevae
