#include "nevae/encoder.h"

#include <string>

#include "nevae/error.h"

namespace nevae {

Tensor node_features(const MolecularGraph& g, std::size_t latent) {
  if (latent < kNumAtomTypes)
    throw InputError("latent dimension " + std::to_string(latent) +
                     " cannot hold one-hot atom types (need >= 4)");
  Tensor f({g.size(), latent});
  for (std::size_t u = 0; u < g.size(); ++u)
    f(u, static_cast<std::size_t>(g.atom(static_cast<int>(u)))) = 1.0;
  return f;
}

WeightedAdjacency bond_adjacency(const MolecularGraph& g) {
  WeightedAdjacency adj(g.size());
  for (std::size_t u = 0; u < g.size(); ++u)
    for (auto [v, order] : g.neighbors(static_cast<int>(u)))
      adj[u].emplace_back(static_cast<std::size_t>(v), static_cast<double>(order));
  return adj;
}

std::vector<Var> embed(Tape& tape, const MolecularGraph& g, const EncoderVars& enc) {
  if (enc.hop_weights.empty()) throw InputError("encoder needs at least one hop (K >= 1)");
  if (g.size() == 0) throw InputError("cannot encode an empty graph");
  const std::size_t latent = tape.value(enc.hop_weights[0]).rows();
  Var features = tape.constant(node_features(g, latent));
  const WeightedAdjacency adj = bond_adjacency(g);

  std::vector<Var> hops;
  hops.push_back(matmul(features, enc.hop_weights[0]));
  for (std::size_t k = 1; k < enc.hop_weights.size(); ++k) {
    Var self = matmul(features, enc.hop_weights[k]);
    hops.push_back(self * neighbor_sum(hops.back(), adj));
  }
  return hops;
}

std::vector<Tensor> embed(const MolecularGraph& g, const ModelParams& params) {
  Tape tape;
  ModelVars vars = bind(tape, params, false);
  std::vector<Tensor> out;
  for (Var c : embed(tape, g, vars.encoder)) out.push_back(c.value());
  return out;
}

PosteriorVars posterior(Tape& tape, const MolecularGraph& g, const EncoderVars& enc) {
  std::vector<Var> hops = embed(tape, g, enc);
  Var hidden = softplus(apply(enc.hidden, concat_cols(hops)));
  PosteriorVars post;
  post.mu = apply(enc.mu, hidden);
  post.sigma = add_const(softplus(apply(enc.sigma, hidden)), kSigmaFloor);
  return post;
}

Posterior posterior(const MolecularGraph& g, const ModelParams& params) {
  Tape tape;
  ModelVars vars = bind(tape, params, false);
  PosteriorVars post = posterior(tape, g, vars.encoder);
  return {post.mu.value(), post.sigma.value()};
}

Tensor standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = normal(rng);
  return t;
}

Var reparameterize(const PosteriorVars& post, const Tensor& eps) {
  Tape& tape = *post.mu.tape;
  return post.mu + post.sigma * tape.constant(eps);
}

LatentSet sample_latent(const Posterior& post, std::mt19937_64& rng, Tensor* eps_out) {
  if (post.mu.shape() != post.sigma.shape())
    throw ShapeError("sample_latent: mu " + shape_string(post.mu.shape()) + " vs sigma " +
                     shape_string(post.sigma.shape()));
  Tensor eps = standard_normal(post.mu.rows(), post.mu.cols(), rng);
  Tensor z = post.mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += post.sigma[i] * eps[i];
  if (eps_out) *eps_out = std::move(eps);
  return z;
}

}  // namespace nevae
