#pragma once

// Generative model: atom-type softmax per node, Poisson edge count, masked
// sequential edge softmax and masked bond-order softmax.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "nevae/masks.h"
#include "nevae/model.h"
#include "nevae/molgraph.h"
#include "nevae/tensor.h"

namespace nevae {

double poisson_logpmf(std::size_t k, double log_rate);

// ---- plain evaluation ------------------------------------------------------

/// Decoder heads evaluated on a fixed latent matrix Z (n x D). Pair logits are
/// computed on demand and cached.
class DecoderEvaluator {
 public:
  DecoderEvaluator(const DecoderParams& params, const Tensor& z);

  std::size_t num_nodes() const { return n_; }
  /// Log-softmax over atom types for node u.
  std::array<double, kNumAtomTypes> feature_logprobs(int u) const;
  /// log lambda_l.
  double log_edge_intensity() const { return log_intensity_; }
  double edge_logit(int u, int v) const;
  std::array<double, kMaxBondOrder> weight_logits(int u, int v) const;

 private:
  const DecoderParams& params_;
  Tensor z_;
  std::size_t n_ = 0;
  double log_intensity_ = 0.0;
  mutable std::vector<double> edge_cache_;
  mutable std::vector<std::uint8_t> edge_cached_;
};

double feature_logprob(const DecoderEvaluator& eval, int u, Atom q);

/// Masked softmax over current candidates; -infinity if (u, v) is not one.
/// Throws NoCandidateError when the candidate set is empty.
double edge_step_logprob(const DecoderEvaluator& eval, const MaskState& state, int u, int v);
/// Masked softmax over bond orders 1..3; masked orders get -infinity.
/// std::nullopt when every order is masked.
std::optional<std::array<double, kMaxBondOrder>> weight_step_logprobs(
    const DecoderEvaluator& eval, const MaskState& state, int u, int v);
double weight_step_logprob(const DecoderEvaluator& eval, const MaskState& state, int u, int v,
                           int order);

// ---- sampling --------------------------------------------------------------

struct GenerationStep {
  int u = 0;
  int v = 0;
  int order = 0;           // 0 when rejected
  double edge_logprob = 0.0;
  double weight_logprob = 0.0;
  bool rejected = false;   // no bond order was allowed; the pair is dropped
};

struct GenerationTrace {
  std::vector<Atom> atoms;
  std::vector<double> feature_logprobs;
  std::size_t edge_count = 0;  // sampled l
  double edge_count_logprob = 0.0;
  std::vector<GenerationStep> steps;
  bool stopped_early = false;  // candidates ran out before l edges were placed

  std::size_t num_committed() const;
  /// Sum of every recorded log-probability.
  double total_logprob() const;
};

struct Sample {
  MolecularGraph graph;
  GenerationTrace trace;
};

struct SampleOptions {
  std::optional<std::size_t> num_nodes;  // drawn from Poisson(lambda_n) when absent
  MaskConfig mask = MaskConfig::valence_only();
};

/// Decodes a graph from a given latent matrix.
Sample sample_from_latent(const DecoderParams& params, const Tensor& z, const MaskConfig& mask,
                          std::mt19937_64& rng);
/// Prior sample: n ~ Poisson(lambda_n) (redrawn while zero), Z ~ N(0, I).
Sample sample_graph(const ModelParams& params, std::mt19937_64& rng, const SampleOptions& options);

// ---- likelihood ------------------------------------------------------------

struct PartitionOptions {
  bool exact = true;
  std::size_t negatives = 10;  // L, used when !exact
};

/// Everything graph_logprob needs besides the parameters: which pairs get
/// logits, how each step's partition is formed, and the observed choices.
/// Building a plan consumes randomness only for negative sampling.
struct LikelihoodPlan {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> pair_u, pair_v;   // distinct pairs needing logits
  std::vector<std::size_t> feature_index;    // flat index into n x 4 logits
  std::vector<Segment> edge_segments;        // one per step, over pair rows
  std::vector<std::size_t> edge_true;        // pair row of each observed edge
  std::vector<Segment> weight_segments;      // one per step, over pair rows x 3
  std::vector<std::size_t> weight_true;      // flat index of each observed order
  std::size_t edge_count = 0;
};

/// Throws InputError if `edge_order` is not a permutation of g's bonds or a
/// step is forbidden by the mask.
LikelihoodPlan make_plan(const MolecularGraph& g, std::span<const Bond> edge_order,
                         const MaskConfig& mask, const PartitionOptions& partition,
                         std::mt19937_64& rng);

/// Log-probability of (g, edge_order) given Z, on the tape.
Var graph_logprob(Var z, const DecoderVars& dec, const LikelihoodPlan& plan);

double graph_logprob(const MolecularGraph& g, const Tensor& z, std::span<const Bond> edge_order,
                     const DecoderParams& params, const MaskConfig& mask,
                     const PartitionOptions& partition, std::mt19937_64& rng);

/// Per-step log partition of the edge softmax (exact or estimated).
std::vector<double> edge_log_partitions(const Tensor& z, const DecoderParams& params,
                                        const LikelihoodPlan& plan);

}  // namespace nevae
