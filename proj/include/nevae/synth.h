#pragma once

// Synthetic graph families and the ranking metrics used to compare a trained
// model's likelihoods with the true generative process. Synthetic graphs use
// carbon atoms and single bonds throughout.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nevae/model.h"
#include "nevae/molgraph.h"
#include "nevae/training.h"

namespace nevae {

/// Graph with every node labelled C.
MolecularGraph plain_graph(std::size_t n, std::span<const std::pair<int, int>> edges);

// ---- Kronecker ---------------------------------------------------------------

struct KroneckerSpec {
  std::array<std::array<double, 2>, 2> initiator{};
  int power = 1;  // 2^power nodes

  std::size_t num_nodes() const { return std::size_t{1} << power; }
  /// Throws InputError unless power >= 1 and every entry lies in [0, 1].
  void validate() const;
};

/// Symmetrised edge probability (P_uv + P_vu) / 2 of P = initiator^(x power).
double kronecker_probability(const KroneckerSpec& spec, std::size_t u, std::size_t v);
MolecularGraph gen_kronecker(const KroneckerSpec& spec, std::mt19937_64& rng);
/// Bernoulli log-likelihood under the identity labelling; -infinity when an
/// edge has probability 0 or a non-edge has probability 1.
double loglik_kronecker(const MolecularGraph& g, const KroneckerSpec& spec);

// ---- Barabasi-Albert -----------------------------------------------------------

/// Graph plus its construction record: targets[t] lists, in draw order, the
/// nodes node t attached to on arrival.
struct BaGraph {
  MolecularGraph graph;
  std::size_t m = 1;
  std::vector<std::vector<int>> targets;
};

/// Nodes 0..m-1 start isolated, node m links to all of them, and each later
/// node draws m distinct targets one at a time with probability proportional
/// to current degree among the targets not yet drawn.
BaGraph gen_ba(std::size_t n, std::size_t m, std::mt19937_64& rng);
/// Sum of log attachment probabilities along the recorded construction.
/// Throws InputError when the record is missing or inconsistent.
double loglik_ba(const BaGraph& g);
/// Reads the construction off the labels (node t attaches to its neighbours
/// with smaller index); -infinity when the labelling cannot be a BA history.
double loglik_ba_identity(const MolecularGraph& g, std::size_t m);

// ---- triangle-free graphs --------------------------------------------------------

std::size_t count_triangles(const MolecularGraph& g);

/// Erdos-Renyi G(n, p) with each edge kept only if it closes no triangle with
/// edges already kept; `maximal` then adds every remaining pair that still
/// closes none, in random order.
MolecularGraph gen_triangle_free(std::size_t n, double edge_prob, bool maximal,
                                 std::mt19937_64& rng);
/// `count` triangle-free graphs with node counts uniform in [min_n, max_n] and
/// expected degree around `mean_degree`.
std::vector<MolecularGraph> triangle_free_corpus(std::size_t count, std::size_t min_n,
                                                 std::size_t max_n, double mean_degree,
                                                 std::uint64_t seed);

// ---- ranking metrics ---------------------------------------------------------------

/// Item ids ordered by decreasing score; equal scores keep ascending id order.
std::vector<std::size_t> rank_by_score(std::span<const double> scores);

/// Spearman correlation of two rankings of the same ids (no ties), computed
/// exactly from integer rank differences. Throws InputError when the lists
/// differ in content or have fewer than 2 entries.
double spearman(std::span<const std::size_t> ranking_a, std::span<const std::size_t> ranking_b);

struct Precision {
  double top = 0.0;
  double bottom = 0.0;
};

/// Top and bottom precision. The reference slices are the first and last
/// max(1, floor(fraction * N)) ids of `reference`. `other` is restricted to
/// the union of both slices, keeping its order; its first |top| ids form its
/// top half and its last |bottom| ids its bottom half.
Precision precision_top_bottom(std::span<const std::size_t> reference,
                               std::span<const std::size_t> other, double fraction = 0.1);

/// Monte-Carlo estimate of E_{Z ~ N(0, I)} log p(G | Z) with one BFS order
/// per draw and the partition chosen by `hyper`.
double prior_expected_loglik(const MolecularGraph& g, const ModelParams& params,
                             const Hyperparams& hyper, std::size_t draws, std::uint64_t seed);

}  // namespace nevae
