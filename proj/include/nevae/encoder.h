#pragma once

// Probabilistic encoder: K-hop neighbourhood aggregation followed by a
// per-node Gaussian posterior.

#include <random>
#include <vector>

#include "nevae/model.h"
#include "nevae/molgraph.h"
#include "nevae/tensor.h"

namespace nevae {

/// Per-node diagonal Gaussian, both n x D; sigma is a standard deviation.
struct Posterior {
  Tensor mu;
  Tensor sigma;
};

struct PosteriorVars {
  Var mu;
  Var sigma;
};

/// n x D matrix of latent vectors, one row per node.
using LatentSet = Tensor;

/// Added to the softplus sigma head so the posterior never collapses to zero.
inline constexpr double kSigmaFloor = 1e-6;

/// One-hot atom types padded with zeros to `latent` columns (latent >= 4).
Tensor node_features(const MolecularGraph& g, std::size_t latent);

/// Bond-order weighted adjacency used by the aggregation step.
WeightedAdjacency bond_adjacency(const MolecularGraph& g);

/// c(1..K): c(1) = F W_1, c(k) = (F W_k) * sum over neighbours v of
/// y_uv c_v(k-1). Each entry is n x D.
std::vector<Var> embed(Tape& tape, const MolecularGraph& g, const EncoderVars& enc);
std::vector<Tensor> embed(const MolecularGraph& g, const ModelParams& params);

PosteriorVars posterior(Tape& tape, const MolecularGraph& g, const EncoderVars& enc);
Posterior posterior(const MolecularGraph& g, const ModelParams& params);

/// Standard normal noise of the given shape.
Tensor standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

/// z = mu + sigma * eps on the tape.
Var reparameterize(const PosteriorVars& post, const Tensor& eps);
/// Draws eps from `rng` and returns mu + sigma * eps. If `eps_out` is given
/// the noise is stored there.
LatentSet sample_latent(const Posterior& post, std::mt19937_64& rng, Tensor* eps_out = nullptr);

}  // namespace nevae
