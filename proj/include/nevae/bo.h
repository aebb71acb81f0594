#pragma once

// Batch Bayesian optimisation over a box with a sparse GP surrogate and
// expected improvement, plus the molecule pipeline built on it.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nevae/decoder.h"
#include "nevae/encoder.h"
#include "nevae/masks.h"
#include "nevae/model.h"
#include "nevae/property.h"
#include "nevae/sgp.h"

namespace nevae {

/// (mean over nodes of mu_u, sum over nodes of mu_u), length 2D.
Eigen::VectorXd molecule_embedding(const Posterior& post);

struct BoOptions {
  std::size_t iterations = 5;
  std::size_t batch = 50;
  std::size_t restarts = 64;       // random starts for EI maximisation
  std::size_t ascent_steps = 30;   // local ascent steps per start
  SgpOptions sgp;
  std::uint64_t seed = 0;
};

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Bounding box of the rows of x, widened by `margin` times its extent.
Box bounding_box(const Eigen::MatrixXd& x, double margin = 0.1);

/// Up to `count` mutually distinct points of high EI inside `box`.
std::vector<Eigen::VectorXd> propose_batch(const SgpModel& model, double best, const Box& box,
                                           std::size_t count, const BoOptions& options,
                                           std::mt19937_64& rng);

/// Returns std::nullopt when the point cannot be evaluated.
using BoxObjective = std::function<std::optional<double>(const Eigen::VectorXd&)>;

struct BoEvaluation {
  std::size_t iteration = 0;
  Eigen::VectorXd x;
  std::optional<double> y;
};

/// Generic loop: per iteration fit the surrogate on every successful
/// evaluation so far, propose a batch, evaluate it.
std::vector<BoEvaluation> bo_maximize(const Eigen::MatrixXd& x0, const Eigen::VectorXd& y0,
                                      const BoxObjective& objective, const Box& box,
                                      const BoOptions& options);

// ---- molecules ---------------------------------------------------------------

struct ScoredMolecule {
  MolecularGraph graph;
  double score = 0.0;
  std::size_t iteration = 0;
};

struct MoleculeBoResult {
  std::vector<ScoredMolecule> ranked;  // distinct by certificate, best first
  std::vector<BoEvaluation> evaluations;
  std::vector<MolecularGraph> decoded;  // one per proposal, in order
  std::size_t proposals = 0;
  std::size_t valid = 0;            // decodes passing the valence rule
  std::size_t connected_valid = 0;  // ... that are also connected; only these are scored
  std::size_t unique_valid = 0;     // distinct scored decodes
  double fraction_valid = 0.0;
  double fraction_connected = 0.0;
  double fraction_unique = 0.0;  // unique_valid / proposals
};

struct MoleculeBoOptions {
  BoOptions bo;
  MaskConfig mask = MaskConfig::valence_only();
};

/// Decodes an embedding-space point: take the training molecule with the
/// nearest embedding, shift each of its posterior means by the difference of
/// the mean halves, and sample the decoder from that latent matrix.
MolecularGraph decode_embedding(const Eigen::VectorXd& target,
                                std::span<const MolecularGraph> train_graphs,
                                const std::vector<Posterior>& train_posteriors,
                                const Eigen::MatrixXd& train_embeddings, const ModelParams& params,
                                const MaskConfig& mask, std::mt19937_64& rng);

MoleculeBoResult bo_loop(std::span<const MolecularGraph> train_graphs,
                         std::span<const double> train_scores, const ModelParams& params,
                         const PropertyOracle& oracle, const MoleculeBoOptions& options);

}  // namespace nevae
