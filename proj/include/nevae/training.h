#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nevae/decoder.h"
#include "nevae/encoder.h"
#include "nevae/masks.h"
#include "nevae/model.h"
#include "nevae/molgraph.h"

namespace nevae {

/// Distribution of BFS source nodes.
enum class SourceKind { kUniform, kDegree, kMaxDegree };
SourceKind parse_source_kind(std::string_view text);
std::string_view source_kind_name(SourceKind kind);

struct Hyperparams {
  ModelDims dims;
  std::size_t negatives = 10;  // L
  bool exact_partition = false;
  double learning_rate = 0.005;
  std::size_t source_samples = 1;  // S
  std::size_t batch_size = 16;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  MaskConfig mask = MaskConfig::valence_only();
  SourceKind source = SourceKind::kUniform;

  static Hyperparams molecule_defaults();   // D=5, K=5, valence masks
  static Hyperparams synthetic_defaults();  // D=7, K=3, no masks
  /// Throws InputError on D < 4, K < 1, L < 1, S < 1 or batch size 0.
  void validate() const;
};

/// Mixes a base seed with an index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Draws a node from `nodes` (all nodes when empty) according to `kind`.
int sample_source(const MolecularGraph& g, SourceKind kind, std::mt19937_64& rng,
                  std::span<const int> nodes = {});

/// Breadth-first edge order with shuffled neighbour lists. Tree edges are
/// emitted on discovery; other edges once both endpoints have been dequeued.
/// Unreached components are entered from a node drawn with `restart`.
std::vector<Bond> bfs_edge_order(const MolecularGraph& g, int source, std::mt19937_64& rng,
                                 SourceKind restart = SourceKind::kUniform);

/// KL(q || N(0, I)) summed over nodes.
double kl_term(const Posterior& post);
Var kl_term(const PosteriorVars& post);

/// Poisson maximum-likelihood rate: the mean node count.
double fit_lambda_n(std::span<const MolecularGraph> corpus);

/// Single-graph ELBO on a tape: one reparameterised Z, S sources each with
/// its own BFS order and negative samples, minus KL, plus log Poisson(n).
/// All randomness comes from `rng`.
Var elbo(const MolecularGraph& g, const ModelParams& params, const ModelVars& vars,
         const Hyperparams& hyper, std::mt19937_64& rng);

double elbo_value(const MolecularGraph& g, const ModelParams& params, const Hyperparams& hyper,
                  std::uint64_t seed);

struct ElboGradient {
  double value = 0.0;
  std::vector<Tensor> grads;  // in ModelParams::tensors() order
};
ElboGradient elbo_gradient(const MolecularGraph& g, const ModelParams& params,
                           const Hyperparams& hyper, std::uint64_t seed);

/// Indices grouped by node count and cut into chunks of at most batch_size.
std::vector<std::vector<std::size_t>> make_batches(std::span<const MolecularGraph> corpus,
                                                   std::size_t batch_size);

struct TrainLogRow {
  std::size_t iteration = 0;
  double mean_elbo = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

/// Adam ascent on the mean batch ELBO. Starts from `init` when given,
/// otherwise from ModelParams::init(dims, seed). Deterministic for a seed.
TrainResult train(std::span<const MolecularGraph> corpus, const Hyperparams& hyper,
                  const ModelParams* init = nullptr, const TrainCallback& on_iteration = {});

/// Mean ELBO over the whole corpus, graph i seeded by derive_seed(seed, i).
double corpus_elbo(std::span<const MolecularGraph> corpus, const ModelParams& params,
                   const Hyperparams& hyper, std::uint64_t seed);

}  // namespace nevae
