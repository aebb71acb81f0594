#include "nevae/synth.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "nevae/decoder.h"
#include "nevae/encoder.h"
#include "nevae/error.h"

namespace nevae {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

MolecularGraph plain_graph(std::size_t n, std::span<const std::pair<int, int>> edges) {
  MolecularGraph g(std::vector<Atom>(n, Atom::C));
  for (auto [u, v] : edges) g.add_bond(u, v, 1);
  return g;
}

// ---- Kronecker ---------------------------------------------------------------

void KroneckerSpec::validate() const {
  if (power < 1 || power > 20) throw InputError("kronecker power must be in 1..20");
  for (const auto& row : initiator)
    for (double p : row)
      if (!(p >= 0.0 && p <= 1.0)) throw InputError("kronecker initiator entries must lie in [0, 1]");
}

namespace {

double directed_probability(const KroneckerSpec& spec, std::size_t u, std::size_t v) {
  double p = 1.0;
  for (int t = 0; t < spec.power; ++t) p *= spec.initiator[(u >> t) & 1][(v >> t) & 1];
  return p;
}

}  // namespace

double kronecker_probability(const KroneckerSpec& spec, std::size_t u, std::size_t v) {
  return 0.5 * (directed_probability(spec, u, v) + directed_probability(spec, v, u));
}

MolecularGraph gen_kronecker(const KroneckerSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const std::size_t n = spec.num_nodes();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<int, int>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (unif(rng) < kronecker_probability(spec, u, v))
        edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  return plain_graph(n, edges);
}

double loglik_kronecker(const MolecularGraph& g, const KroneckerSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_nodes();
  if (g.size() != n)
    throw InputError("kronecker log-likelihood needs " + std::to_string(n) + " nodes, graph has " +
                     std::to_string(g.size()));
  double total = 0.0;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = kronecker_probability(spec, u, v);
      const bool edge = g.bond_order(static_cast<int>(u), static_cast<int>(v)) != 0;
      const double q = edge ? p : 1.0 - p;
      if (q <= 0.0) return kNegInf;
      total += std::log(q);
    }
  return total;
}

// ---- Barabasi-Albert -----------------------------------------------------------

BaGraph gen_ba(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  if (m < 1) throw InputError("BA: m must be at least 1");
  if (n <= m) throw InputError("BA: need n > m");
  BaGraph out;
  out.m = m;
  out.targets.assign(n, {});
  std::vector<double> degree(n, 0.0);
  std::vector<std::pair<int, int>> edges;
  for (std::size_t t = 0; t < m; ++t) {
    out.targets[m].push_back(static_cast<int>(t));
    edges.emplace_back(static_cast<int>(t), static_cast<int>(m));
    degree[t] += 1;
  }
  degree[m] = static_cast<double>(m);
  for (std::size_t t = m + 1; t < n; ++t) {
    std::vector<double> weights(degree.begin(), degree.begin() + static_cast<std::ptrdiff_t>(t));
    for (std::size_t j = 0; j < m; ++j) {
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      const std::size_t target = pick(rng);
      weights[target] = 0.0;
      out.targets[t].push_back(static_cast<int>(target));
      edges.emplace_back(static_cast<int>(target), static_cast<int>(t));
    }
    for (int target : out.targets[t]) degree[target] += 1;
    degree[t] = static_cast<double>(m);
  }
  out.graph = plain_graph(n, edges);
  return out;
}

namespace {

double ba_history_loglik(std::size_t n, std::size_t m, const std::vector<std::vector<int>>& targets) {
  std::vector<double> degree(n, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t < m) {
      if (!targets[t].empty()) return kNegInf;
      continue;
    }
    if (targets[t].size() != m) return kNegInf;
    double mass = 0.0;
    for (std::size_t j = 0; j < t; ++j) mass += degree[j];
    std::unordered_set<int> drawn;
    for (int target : targets[t]) {
      if (target < 0 || static_cast<std::size_t>(target) >= t || !drawn.insert(target).second)
        return kNegInf;
      if (t > m) {
        if (degree[target] <= 0.0) return kNegInf;
        total += std::log(degree[target] / mass);
        mass -= degree[target];
      }
    }
    if (t == m) {
      std::vector<int> sorted = targets[t];
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t j = 0; j < m; ++j)
        if (sorted[j] != static_cast<int>(j)) return kNegInf;
    }
    for (int target : targets[t]) degree[target] += 1;
    degree[t] = static_cast<double>(m);
  }
  return total;
}

}  // namespace

double loglik_ba(const BaGraph& g) {
  const std::size_t n = g.graph.size();
  if (n > 1 && g.targets.size() != n) throw InputError("BA log-likelihood: missing arrival record");
  if (n <= 1) return 0.0;
  // The record must describe exactly the graph's edge set.
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t)
    for (int target : g.targets[t]) {
      ++count;
      if (g.graph.bond_order(static_cast<int>(t), target) == 0)
        throw InputError("BA log-likelihood: arrival record names a missing edge");
    }
  if (count != g.graph.num_bonds())
    throw InputError("BA log-likelihood: arrival record does not cover every edge");
  const double ll = ba_history_loglik(n, g.m, g.targets);
  if (ll == kNegInf) throw InputError("BA log-likelihood: arrival record is not a valid history");
  return ll;
}

double loglik_ba_identity(const MolecularGraph& g, std::size_t m) {
  const std::size_t n = g.size();
  if (m < 1) throw InputError("BA: m must be at least 1");
  if (n <= m) return kNegInf;
  // Targets within one arrival are taken in ascending order.
  std::vector<std::vector<int>> targets(n);
  for (std::size_t t = 0; t < n; ++t)
    for (auto [v, order] : g.neighbors(static_cast<int>(t)))
      if (static_cast<std::size_t>(v) < t) targets[t].push_back(v);
  for (auto& list : targets) std::sort(list.begin(), list.end());
  return ba_history_loglik(n, m, targets);
}

// ---- triangle-free ---------------------------------------------------------------

std::size_t count_triangles(const MolecularGraph& g) {
  std::size_t count = 0;
  for (const Bond& b : g.bonds())
    for (auto [w, order] : g.neighbors(b.u))
      if (w > b.v && g.bond_order(b.v, w) != 0) ++count;
  return count;
}

namespace {

bool closes_triangle(const std::vector<std::vector<char>>& adj, std::size_t u, std::size_t v) {
  for (std::size_t w = 0; w < adj.size(); ++w)
    if (adj[u][w] && adj[v][w]) return true;
  return false;
}

}  // namespace

MolecularGraph gen_triangle_free(std::size_t n, double edge_prob, bool maximal,
                                 std::mt19937_64& rng) {
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw InputError("edge probability outside [0, 1]");
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) pairs.emplace_back(static_cast<int>(u), static_cast<int>(v));
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  std::vector<std::pair<int, int>> edges;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto try_add = [&](int u, int v) {
    if (adj[u][v] || closes_triangle(adj, u, v)) return;
    adj[u][v] = adj[v][u] = 1;
    edges.emplace_back(u, v);
  };
  for (auto [u, v] : pairs)
    if (unif(rng) < edge_prob) try_add(u, v);
  if (maximal) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (auto [u, v] : pairs) try_add(u, v);
  }
  return plain_graph(n, edges);
}

std::vector<MolecularGraph> triangle_free_corpus(std::size_t count, std::size_t min_n,
                                                 std::size_t max_n, double mean_degree,
                                                 std::uint64_t seed) {
  if (min_n < 2 || max_n < min_n) throw InputError("triangle-free corpus: bad size range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size(min_n, max_n);
  std::vector<MolecularGraph> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = size(rng);
    const double p = std::min(1.0, mean_degree / static_cast<double>(n - 1));
    out.push_back(gen_triangle_free(n, p, false, rng));
  }
  return out;
}

// ---- ranking metrics ---------------------------------------------------------------

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return ids;
}

namespace {

std::vector<long long> positions(std::span<const std::size_t> ranking, std::size_t n) {
  std::vector<long long> pos(n, -1);
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const std::size_t id = ranking[i];
    if (id >= n || pos[id] >= 0) throw InputError("ranking contains an unknown or repeated id");
    pos[id] = static_cast<long long>(i);
  }
  return pos;
}

}  // namespace

double spearman(std::span<const std::size_t> ranking_a, std::span<const std::size_t> ranking_b) {
  const std::size_t n = ranking_a.size();
  if (n < 2) throw InputError("spearman needs at least 2 items");
  if (ranking_b.size() != n) throw InputError("spearman: rankings differ in length");
  const std::size_t id_bound = 1 + std::max(*std::max_element(ranking_a.begin(), ranking_a.end()),
                                            *std::max_element(ranking_b.begin(), ranking_b.end()));
  const auto pa = positions(ranking_a, id_bound);
  const auto pb = positions(ranking_b, id_bound);
  long long d2 = 0;
  for (std::size_t id = 0; id < id_bound; ++id) {
    if ((pa[id] < 0) != (pb[id] < 0)) throw InputError("spearman: rankings hold different ids");
    if (pa[id] < 0) continue;
    const long long d = pa[id] - pb[id];
    d2 += d * d;
  }
  const long long nn = static_cast<long long>(n);
  const long long denom = nn * (nn * nn - 1);
  return static_cast<double>(denom - 6 * d2) / static_cast<double>(denom);
}

Precision precision_top_bottom(std::span<const std::size_t> reference,
                               std::span<const std::size_t> other, double fraction) {
  const std::size_t n = reference.size();
  if (n < 10) throw InputError("precision needs at least 10 ranked items");
  if (other.size() != n) throw InputError("precision: rankings differ in length");
  if (!(fraction > 0.0 && fraction <= 0.5)) throw InputError("precision fraction must be in (0, 0.5]");
  const std::size_t slice =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));

  std::unordered_set<std::size_t> top(reference.begin(), reference.begin() + static_cast<std::ptrdiff_t>(slice));
  std::unordered_set<std::size_t> bottom(reference.end() - static_cast<std::ptrdiff_t>(slice), reference.end());
  std::vector<std::size_t> restricted;
  for (std::size_t id : other)
    if (top.contains(id) || bottom.contains(id)) restricted.push_back(id);
  if (restricted.size() != 2 * slice) throw InputError("precision: rankings hold different ids");

  Precision out;
  std::size_t hits_top = 0, hits_bottom = 0;
  for (std::size_t i = 0; i < slice; ++i) hits_top += top.contains(restricted[i]) ? 1 : 0;
  for (std::size_t i = slice; i < 2 * slice; ++i) hits_bottom += bottom.contains(restricted[i]) ? 1 : 0;
  out.top = static_cast<double>(hits_top) / static_cast<double>(slice);
  out.bottom = static_cast<double>(hits_bottom) / static_cast<double>(slice);
  return out;
}

double prior_expected_loglik(const MolecularGraph& g, const ModelParams& params,
                             const Hyperparams& hyper, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw InputError("prior_expected_loglik: draws must be positive");
  std::mt19937_64 rng(seed);
  const PartitionOptions partition{hyper.exact_partition, hyper.negatives};
  double total = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const Tensor z = standard_normal(g.size(), params.dims.latent, rng);
    const int source = sample_source(g, hyper.source, rng);
    const auto order = bfs_edge_order(g, source, rng, hyper.source);
    total += graph_logprob(g, z, order, params.decoder, hyper.mask, partition, rng);
  }
  return total / static_cast<double>(draws);
}

}  // namespace nevae
