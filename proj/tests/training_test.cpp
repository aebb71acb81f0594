#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "nevae/error.h"
#include "nevae/gradcheck.h"
#include "nevae/training.h"
#include "test_util.h"

namespace nevae {
namespace {

std::vector<Bond> sorted_bonds(std::vector<Bond> bonds) {
  for (Bond& b : bonds)
    if (b.u > b.v) std::swap(b.u, b.v);
  std::sort(bonds.begin(), bonds.end(),
            [](const Bond& a, const Bond& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
  return bonds;
}

TEST(Bfs, PathHasOneOrder) {
  std::vector<Bond> bonds = {{0, 1, 1}, {1, 2, 2}};
  const MolecularGraph g({Atom::C, Atom::C, Atom::O}, bonds);
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto order = bfs_edge_order(g, 0, rng);
    ASSERT_EQ(order.size(), 2u);
    EXPECT_EQ(order[0].u, 0);
    EXPECT_EQ(order[0].v, 1);
    EXPECT_EQ(order[1].u, 1);
    EXPECT_EQ(order[1].v, 2);
    EXPECT_EQ(order[1].order, 2);
  }
}

TEST(Bfs, StarLeafOrdersUniform) {
  std::vector<Bond> bonds = {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}};
  const MolecularGraph g(std::vector<Atom>(4, Atom::C), bonds);
  std::map<std::vector<int>, int> freq;
  std::mt19937_64 rng(3);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    std::vector<int> leaves;
    for (const Bond& b : bfs_edge_order(g, 0, rng)) leaves.push_back(b.v);
    ++freq[leaves];
  }
  ASSERT_EQ(freq.size(), 6u);
  const double p = 1.0 / 6.0, sd = std::sqrt(p * (1 - p) / draws);
  for (auto [order, count] : freq) EXPECT_LE(std::abs(count / double(draws) - p), 3 * sd);
}

TEST(Bfs, EmitsEveryEdgeOnceIncludingDisconnected) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    MolecularGraph g = testing::random_connected_graph(1 + trial % 12, trial % 5, rng);
    if (trial % 3 == 0) {
      // append a second component
      MolecularGraph h = testing::random_connected_graph(1 + trial % 4, 0, rng);
      std::vector<Atom> atoms = g.atoms();
      atoms.insert(atoms.end(), h.atoms().begin(), h.atoms().end());
      std::vector<Bond> bonds = g.bonds();
      for (Bond b : h.bonds()) bonds.push_back({b.u + int(g.size()), b.v + int(g.size()), b.order});
      g = MolecularGraph(atoms, bonds);
    }
    const int source = static_cast<int>(rng() % g.size());
    const auto order = bfs_edge_order(g, source, rng, static_cast<SourceKind>(trial % 3));
    EXPECT_EQ(sorted_bonds(order), sorted_bonds(g.bonds()));
    if (!order.empty()) EXPECT_TRUE(order[0].u == source || order[0].v == source || trial % 3 == 0);
  }
  std::mt19937_64 r(0);
  EXPECT_THROW(bfs_edge_order(MolecularGraph({Atom::C}), 1, r), InputError);
}

// Tree edges come out in discovery order: every edge touches a node seen earlier.
TEST(Bfs, ConnectedPrefixes) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const MolecularGraph g = testing::random_connected_graph(2 + trial % 10, trial % 4, rng);
    const int source = static_cast<int>(rng() % g.size());
    std::set<int> seen = {source};
    for (const Bond& b : bfs_edge_order(g, source, rng)) {
      ASSERT_TRUE(seen.contains(b.u) || seen.contains(b.v));
      seen.insert(b.u);
      seen.insert(b.v);
    }
  }
}

TEST(Source, Distributions) {
  std::vector<Bond> path = {{0, 1, 1}, {1, 2, 1}};
  const MolecularGraph g(std::vector<Atom>(3, Atom::C), path);
  const MolecularGraph four(std::vector<Atom>(4, Atom::C));
  std::mt19937_64 rng(6);
  const int draws = 40000;
  std::vector<int> uni(4, 0), deg(3, 0);
  for (int i = 0; i < draws; ++i) {
    ++uni[sample_source(four, SourceKind::kUniform, rng)];
    ++deg[sample_source(g, SourceKind::kDegree, rng)];
    EXPECT_EQ(sample_source(g, SourceKind::kMaxDegree, rng), 1);
  }
  auto within = [&](int count, double p) {
    return std::abs(count / double(draws) - p) <= 3 * std::sqrt(p * (1 - p) / draws);
  };
  for (int c : uni) EXPECT_TRUE(within(c, 0.25));
  EXPECT_TRUE(within(deg[0], 0.25));
  EXPECT_TRUE(within(deg[1], 0.5));
  EXPECT_TRUE(within(deg[2], 0.25));
  EXPECT_EQ(parse_source_kind("max_degree"), SourceKind::kMaxDegree);
  EXPECT_THROW(parse_source_kind("random"), InputError);
}

TEST(Kl, ClosedFormExamples) {
  EXPECT_EQ(kl_term(Posterior{Tensor({3, 5}), Tensor::filled({3, 5}, 1.0)}), 0.0);
  EXPECT_DOUBLE_EQ(kl_term(Posterior{Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(1, 2, {1, 1})}), 0.5);
}

TEST(Kl, MonteCarloWithinOnePercent) {
  const Posterior post{Tensor::matrix(2, 2, {0.8, -0.5, 1.2, 0.3}), Tensor::matrix(2, 2, {0.6, 1.3, 0.4, 0.9})};
  std::mt19937_64 rng(8);
  const int draws = 1000000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Tensor z = sample_latent(post, rng);
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double e = (z[k] - post.mu[k]) / post.sigma[k];
      total += -0.5 * e * e - std::log(post.sigma[k]) + 0.5 * z[k] * z[k];
    }
  }
  const double exact = kl_term(post);
  EXPECT_LE(std::abs(total / draws - exact), 0.01 * exact);
}

TEST(Kl, TapeGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const Tensor mu = testing::random_tensor({3, 4}, rng, -2, 2);
  const Tensor sigma = testing::random_tensor({3, 4}, rng, 0.2, 2.0);
  const Tensor params[] = {mu, sigma};
  const auto result = finite_diff_check(
      [](Tape&, std::span<const Var> p) { return kl_term(PosteriorVars{p[0], p[1]}); }, params, 1e-5, 1e-3);
  EXPECT_LT(result.max_relative_error, 1e-6);
  Tape tape;
  EXPECT_NEAR(kl_term(PosteriorVars{tape.constant(mu), tape.constant(sigma)}).value().item(),
              kl_term(Posterior{mu, sigma}), 1e-12);
}

TEST(Kl, RelabelInvariant) {
  std::mt19937_64 rng(10);
  const ModelParams p = ModelParams::init({5, 3, 8}, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const MolecularGraph g = testing::random_connected_graph(3 + trial % 9, 2, rng);
    const MolecularGraph h = g.relabeled(testing::random_permutation(g.size(), rng));
    const double a = kl_term(posterior(g, p)), b = kl_term(posterior(h, p));
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
  }
}

// Every ELBO coordinate against central differences with the randomness frozen by the seed.
TEST(Elbo, FullGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    Hyperparams hyper = Hyperparams::molecule_defaults();
    hyper.dims = {4, 2, 5};
    hyper.negatives = 2;
    hyper.source_samples = 1 + trial % 2;
    hyper.mask = trial == 2 ? MaskConfig::none() : MaskConfig::valence_only();
    ModelParams params = ModelParams::init(hyper.dims, 100 + trial);
    params.lambda_n = 5;
    MolecularGraph g(std::vector<Atom>(5, Atom::C));
    for (int v = 1; v < 5; ++v) g.add_bond(static_cast<int>(rng() % v), v, 1);
    const std::uint64_t seed = 1234 + trial;
    const ElboGradient analytic = elbo_gradient(g, params, hyper, seed);
    EXPECT_EQ(analytic.value, elbo_value(g, params, hyper, seed));
    auto tensors = params.tensors();
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < tensors.size(); ++i)
      for (std::size_t j = 0; j < tensors[i]->size(); ++j) {
        const double orig = (*tensors[i])[j];
        (*tensors[i])[j] = orig + h;
        const double up = elbo_value(g, params, hyper, seed);
        (*tensors[i])[j] = orig - h;
        const double down = elbo_value(g, params, hyper, seed);
        (*tensors[i])[j] = orig;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic.grads[i][j];
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3}));
      }
    EXPECT_LT(worst, 1e-4) << "trial " << trial;
  }
}

TEST(Elbo, SeedDeterministic) {
  const Hyperparams hyper = Hyperparams::molecule_defaults();
  const ModelParams p = ModelParams::init(hyper.dims, 2);
  const MolecularGraph g = generate_desk_corpus(1, 12, 8)[0];
  EXPECT_EQ(elbo_value(g, p, hyper, 77), elbo_value(g, p, hyper, 77));
  EXPECT_NE(elbo_value(g, p, hyper, 77), elbo_value(g, p, hyper, 78));
  EXPECT_TRUE(std::isfinite(elbo_value(g, p, hyper, 77)));
}

// Paired trials: the ELBO of a relabeled graph has the same distribution.
TEST(Elbo, RelabelInvariantInExpectation) {
  Hyperparams hyper = Hyperparams::molecule_defaults();
  hyper.mask = MaskConfig::none();
  const ModelParams p = ModelParams::init(hyper.dims, 3);
  std::mt19937_64 rng(1);
  const MolecularGraph g = testing::random_connected_graph(7, 2, rng);
  const MolecularGraph h = g.relabeled(testing::random_permutation(7, rng));
  const int trials = 3000;
  double sum = 0.0, sum2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double d = elbo_value(g, p, hyper, t) - elbo_value(h, p, hyper, t);
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / trials;
  const double se = std::sqrt((sum2 / trials - mean * mean) / trials);
  EXPECT_LE(std::abs(mean), 3 * se);
}

// Log marginal likelihood of a 3-node graph under a decoder that only reads
// the first latent coordinate of each node, by a 3-D trapezoid rule over
// those coordinates and an exact sum over edge orders.
TEST(Elbo, BelowLogMarginalLikelihood) {
  Hyperparams hyper = Hyperparams::molecule_defaults();
  hyper.dims = {4, 2, 6};
  hyper.exact_partition = true;
  hyper.mask = MaskConfig::none();
  ModelParams p = ModelParams::init(hyper.dims, 21);
  p.lambda_n = 3;
  for (Tensor* w : {&p.decoder.feature.hidden.weight, &p.decoder.intensity_node.weight,
                    &p.decoder.edge.hidden.weight, &p.decoder.weight.hidden.weight})
    for (std::size_t r = 1; r < w->rows(); ++r)
      for (std::size_t c = 0; c < w->cols(); ++c) (*w)(r, c) = 0.0;

  std::vector<Bond> bonds = {{0, 1, 1}, {1, 2, 2}};
  const MolecularGraph g({Atom::C, Atom::C, Atom::O}, bonds);
  const std::vector<std::vector<Bond>> orders = {{bonds[0], bonds[1]}, {bonds[1], bonds[0]}};
  std::vector<LikelihoodPlan> plans;
  std::mt19937_64 unused(0);
  for (const auto& o : orders) plans.push_back(make_plan(g, o, MaskConfig::none(), {}, unused));

  const int points = 41;
  const double lo = -7.0, step = 14.0 / (points - 1);
  std::vector<double> terms;
  Tensor z({3, 4});
  for (int a = 0; a < points; ++a)
    for (int b = 0; b < points; ++b)
      for (int c = 0; c < points; ++c) {
        const double x[3] = {lo + a * step, lo + b * step, lo + c * step};
        double log_prior = 0.0;
        for (int u = 0; u < 3; ++u) {
          z(u, 0) = x[u];
          log_prior += -0.5 * x[u] * x[u] - 0.5 * std::log(2 * M_PI) + std::log(step);
        }
        Tape tape;
        const DecoderVars dec = bind_decoder(tape, p.decoder, false);
        std::vector<double> per_order;
        for (const auto& plan : plans) per_order.push_back(graph_logprob(tape.constant(z), dec, plan).value().item());
        terms.push_back(log_prior + logsumexp(per_order));
      }
  const double log_marginal = logsumexp(terms) + poisson_logpmf(3, std::log(p.lambda_n));

  const int trials = 4000;
  double mean = 0.0;
  for (int t = 0; t < trials; ++t) mean += elbo_value(g, p, hyper, t) / trials;
  EXPECT_LE(mean, log_marginal);
  EXPECT_TRUE(std::isfinite(log_marginal));
}

TEST(LambdaN, PoissonMle) {
  std::vector<MolecularGraph> two_four = {MolecularGraph(std::vector<Atom>(2, Atom::C)),
                                          MolecularGraph(std::vector<Atom>(4, Atom::C))};
  EXPECT_EQ(fit_lambda_n(two_four), 3.0);
  std::vector<MolecularGraph> equal(5, MolecularGraph(std::vector<Atom>(7, Atom::H)));
  EXPECT_EQ(fit_lambda_n(equal), 7.0);
  EXPECT_THROW(fit_lambda_n(std::vector<MolecularGraph>{}), InputError);
}

TEST(Batches, UniformNodeCountAndCoverEachGraphOnce) {
  const auto corpus = generate_desk_corpus(120, 12, 3);
  for (std::size_t batch_size : {1u, 4u, 16u}) {
    const auto batches = make_batches(corpus, batch_size);
    std::vector<int> hits(corpus.size(), 0);
    for (const auto& batch : batches) {
      ASSERT_FALSE(batch.empty());
      ASSERT_LE(batch.size(), batch_size);
      for (std::size_t i : batch) {
        EXPECT_EQ(corpus[i].size(), corpus[batch[0]].size());
        ++hits[i];
      }
    }
    for (int h : hits) EXPECT_EQ(h, 1);
  }
  EXPECT_THROW(make_batches(corpus, 0), InputError);
}

TEST(Hyper, ValidateRejectsBadValues) {
  Hyperparams h = Hyperparams::molecule_defaults();
  EXPECT_NO_THROW(h.validate());
  h.dims.latent = 3;
  EXPECT_THROW(h.validate(), InputError);
  h = Hyperparams::synthetic_defaults();
  EXPECT_EQ(h.dims.latent, 7u);
  EXPECT_EQ(h.dims.hops, 3u);
  h.negatives = 0;
  EXPECT_THROW(h.validate(), InputError);
  h = Hyperparams{};
  h.dims.hops = 0;
  EXPECT_THROW(h.validate(), InputError);
}

TEST(Train, ImprovesElboAndIsDeterministic) {
  const auto corpus = generate_desk_corpus(40, 10, 5);
  Hyperparams hyper = Hyperparams::molecule_defaults();
  hyper.iterations = 150;
  hyper.batch_size = 8;
  hyper.learning_rate = 0.01;
  hyper.seed = 4;
  const TrainResult a = train(corpus, hyper);
  ASSERT_EQ(a.log.size(), 150u);
  EXPECT_EQ(a.params.lambda_n, fit_lambda_n(corpus));
  for (const auto& row : a.log) ASSERT_TRUE(std::isfinite(row.mean_elbo));
  const double before = corpus_elbo(corpus, ModelParams::init(hyper.dims, hyper.seed), hyper, 9);
  const double after = corpus_elbo(corpus, a.params, hyper, 9);
  EXPECT_GT(after, before);

  hyper.iterations = 10;
  const TrainResult b = train(corpus, hyper), c = train(corpus, hyper);
  for (std::size_t i = 0; i < b.log.size(); ++i) EXPECT_EQ(b.log[i].mean_elbo, c.log[i].mean_elbo);
  const auto tb = b.params.tensors();
  const auto tc = c.params.tensors();
  for (std::size_t i = 0; i < tb.size(); ++i) EXPECT_EQ(*tb[i], *tc[i]);
  EXPECT_THROW(train(std::vector<MolecularGraph>{}, hyper), InputError);
}

TEST(Train, NumericFailureNamesIteration) {
  const auto corpus = generate_desk_corpus(10, 8, 6);
  Hyperparams hyper = Hyperparams::molecule_defaults();
  hyper.iterations = 3;
  ModelParams init = ModelParams::init(hyper.dims, 0);
  init.encoder.hop_weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(corpus, hyper, &init);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace nevae
