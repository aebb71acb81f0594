#include "nevae/bo.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

#include "nevae/certificate.h"
#include "nevae/error.h"
#include "nevae/training.h"

namespace nevae {

Eigen::VectorXd molecule_embedding(const Posterior& post) {
  const std::size_t n = post.mu.rows(), d = post.mu.cols();
  if (n == 0) throw InputError("molecule_embedding: empty posterior");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * d));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t j = 0; j < d; ++j) out[static_cast<Eigen::Index>(d + j)] += post.mu(u, j);
  for (std::size_t j = 0; j < d; ++j)
    out[static_cast<Eigen::Index>(j)] = out[static_cast<Eigen::Index>(d + j)] / static_cast<double>(n);
  return out;
}

Box bounding_box(const Eigen::MatrixXd& x, double margin) {
  if (x.rows() == 0) throw InputError("bounding_box: no points");
  Box box{x.colwise().minCoeff().transpose(), x.colwise().maxCoeff().transpose()};
  const Eigen::VectorXd extent = (box.upper - box.lower).cwiseMax(1e-6);
  box.lower -= margin * extent;
  box.upper += margin * extent;
  return box;
}

namespace {

double ei_at(const SgpModel& model, double best, const Eigen::VectorXd& x) {
  const Prediction p = model.predict(x);
  return expected_improvement(p.mean, p.variance, best);
}

Eigen::VectorXd uniform_in(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd x(box.lower.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    x[j] = box.lower[j] + unif(rng) * (box.upper[j] - box.lower[j]);
  return x;
}

/// Finite-difference gradient ascent with step halving, projected on the box.
Eigen::VectorXd local_ascent(const SgpModel& model, double best, const Box& box, Eigen::VectorXd x,
                             std::size_t steps, double* value) {
  const Eigen::VectorXd extent = box.upper - box.lower;
  double fx = ei_at(model, best, x);
  double step = 0.05;
  for (std::size_t s = 0; s < steps && step > 1e-6; ++s) {
    Eigen::VectorXd grad(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = 1e-6 * std::max(extent[j], 1e-12);
      Eigen::VectorXd up = x, down = x;
      up[j] = std::min(up[j] + h, box.upper[j]);
      down[j] = std::max(down[j] - h, box.lower[j]);
      grad[j] = (ei_at(model, best, up) - ei_at(model, best, down)) / std::max(up[j] - down[j], 1e-300);
    }
    const Eigen::VectorXd scaled = grad.cwiseProduct(extent);
    const double norm = scaled.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    Eigen::VectorXd cand =
        (x + step * extent.cwiseProduct(scaled) / norm).cwiseMax(box.lower).cwiseMin(box.upper);
    const double fc = ei_at(model, best, cand);
    if (fc > fx) {
      x = cand;
      fx = fc;
    } else {
      step *= 0.5;
    }
  }
  *value = fx;
  return x;
}

}  // namespace

std::vector<Eigen::VectorXd> propose_batch(const SgpModel& model, double best, const Box& box,
                                           std::size_t count, const BoOptions& options,
                                           std::mt19937_64& rng) {
  if (box.lower.size() != box.upper.size() || box.lower.size() == 0)
    throw InputError("propose_batch: malformed box");
  const std::size_t starts = std::max(options.restarts, 2 * count);
  std::vector<std::pair<double, Eigen::VectorXd>> found;
  for (std::size_t s = 0; s < starts; ++s) {
    double value = 0.0;
    Eigen::VectorXd x = local_ascent(model, best, box, uniform_in(box, rng), options.ascent_steps, &value);
    found.emplace_back(value, std::move(x));
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  const double min_gap = 1e-3 * (box.upper - box.lower).norm();
  std::vector<Eigen::VectorXd> batch;
  for (const auto& [value, x] : found) {
    if (batch.size() == count) break;
    bool distinct = true;
    for (const auto& y : batch)
      if ((x - y).norm() < min_gap) {
        distinct = false;
        break;
      }
    if (distinct) batch.push_back(x);
  }
  while (batch.size() < count) batch.push_back(uniform_in(box, rng));
  return batch;
}

std::vector<BoEvaluation> bo_maximize(const Eigen::MatrixXd& x0, const Eigen::VectorXd& y0,
                                      const BoxObjective& objective, const Box& box,
                                      const BoOptions& options) {
  if (x0.rows() == 0 || x0.rows() != y0.size()) throw InputError("bo: need initial observations");
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> ys;
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    xs.push_back(x0.row(i).transpose());
    ys.push_back(y0[i]);
  }
  std::mt19937_64 rng(options.seed);
  std::vector<BoEvaluation> out;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(xs.size()), x0.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
      y[static_cast<Eigen::Index>(i)] = ys[i];
    }
    SgpOptions sgp = options.sgp;
    sgp.seed = derive_seed(options.seed, it);
    const SgpModel model = SgpModel::fit(x, y, sgp);
    const double best = *std::max_element(ys.begin(), ys.end());
    for (Eigen::VectorXd& cand : propose_batch(model, best, box, options.batch, options, rng)) {
      BoEvaluation e{it, cand, objective(cand)};
      if (e.y) {
        xs.push_back(cand);
        ys.push_back(*e.y);
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

MolecularGraph decode_embedding(const Eigen::VectorXd& target,
                                std::span<const MolecularGraph> train_graphs,
                                const std::vector<Posterior>& train_posteriors,
                                const Eigen::MatrixXd& train_embeddings, const ModelParams& params,
                                const MaskConfig& mask, std::mt19937_64& rng) {
  if (train_graphs.empty() || train_embeddings.rows() != static_cast<Eigen::Index>(train_graphs.size()))
    throw InputError("decode_embedding: training embeddings do not match the graphs");
  Eigen::Index nearest = 0;
  (train_embeddings.rowwise() - target.transpose()).rowwise().squaredNorm().minCoeff(&nearest);
  const std::size_t d = params.dims.latent;
  const Posterior& post = train_posteriors[static_cast<std::size_t>(nearest)];
  Tensor z = post.mu;
  for (std::size_t u = 0; u < z.rows(); ++u)
    for (std::size_t j = 0; j < d; ++j)
      z(u, j) += target[static_cast<Eigen::Index>(j)] - train_embeddings(nearest, static_cast<Eigen::Index>(j));
  return sample_from_latent(params.decoder, z, mask, rng).graph;
}

MoleculeBoResult bo_loop(std::span<const MolecularGraph> train_graphs,
                         std::span<const double> train_scores, const ModelParams& params,
                         const PropertyOracle& oracle, const MoleculeBoOptions& options) {
  if (train_graphs.empty() || train_graphs.size() != train_scores.size())
    throw InputError("bo_loop: need one score per training molecule");
  const std::size_t n = train_graphs.size();
  const Eigen::Index width = static_cast<Eigen::Index>(2 * params.dims.latent);
  std::vector<Posterior> posteriors;
  Eigen::MatrixXd embeddings(static_cast<Eigen::Index>(n), width);
  for (std::size_t i = 0; i < n; ++i) {
    posteriors.push_back(posterior(train_graphs[i], params));
    embeddings.row(static_cast<Eigen::Index>(i)) = molecule_embedding(posteriors.back()).transpose();
  }
  const Box box = bounding_box(embeddings);

  std::vector<Eigen::VectorXd> xs;
  std::vector<double> ys(train_scores.begin(), train_scores.end());
  for (std::size_t i = 0; i < n; ++i) xs.push_back(embeddings.row(static_cast<Eigen::Index>(i)).transpose());

  MoleculeBoResult result;
  std::map<std::string, ScoredMolecule> best_by_cert;
  std::mt19937_64 rng(options.bo.seed);
  for (std::size_t it = 0; it < options.bo.iterations; ++it) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(xs.size()), width);
    Eigen::VectorXd y(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
      y[static_cast<Eigen::Index>(i)] = ys[i];
    }
    SgpOptions sgp = options.bo.sgp;
    sgp.seed = derive_seed(options.bo.seed, it);
    const SgpModel model = SgpModel::fit(x, y, sgp);
    const double best = *std::max_element(ys.begin(), ys.end());
    for (Eigen::VectorXd& cand : propose_batch(model, best, box, options.bo.batch, options.bo, rng)) {
      ++result.proposals;
      BoEvaluation e{it, cand, std::nullopt};
      MolecularGraph g = decode_embedding(cand, train_graphs, posteriors, embeddings, params, options.mask, rng);
      if (satisfies_valence(g, options.mask.table)) ++result.valid;
      if (is_valid_molecule(g, options.mask.table)) {
        ++result.connected_valid;
        const double score = oracle.score(g);
        e.y = score;
        xs.push_back(molecule_embedding(posterior(g, params)));
        ys.push_back(score);
        const std::string cert = canonical_certificate(g);
        auto found = best_by_cert.find(cert);
        if (found == best_by_cert.end()) best_by_cert.emplace(cert, ScoredMolecule{g, score, it});
      }
      result.decoded.push_back(std::move(g));
      result.evaluations.push_back(std::move(e));
    }
  }
  result.unique_valid = best_by_cert.size();
  for (auto& [cert, mol] : best_by_cert) result.ranked.push_back(std::move(mol));
  std::stable_sort(result.ranked.begin(), result.ranked.end(),
                   [](const ScoredMolecule& a, const ScoredMolecule& b) { return a.score > b.score; });
  if (result.proposals > 0) {
    const double proposals = static_cast<double>(result.proposals);
    result.fraction_valid = static_cast<double>(result.valid) / proposals;
    result.fraction_connected = static_cast<double>(result.connected_valid) / proposals;
    result.fraction_unique =
        static_cast<double>(result.unique_valid) / proposals;
  }
  return result;
}

}  // namespace nevae
