#include "nevae/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <unordered_set>

#include "nevae/adam.h"
#include "nevae/error.h"
#include "nevae/parallel.h"

namespace nevae {

SourceKind parse_source_kind(std::string_view text) {
  if (text == "uniform") return SourceKind::kUniform;
  if (text == "degree") return SourceKind::kDegree;
  if (text == "max_degree" || text == "max-degree") return SourceKind::kMaxDegree;
  throw InputError("unknown source distribution \"" + std::string(text) +
                   "\" (expected uniform, degree, max_degree)");
}

std::string_view source_kind_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::kUniform: return "uniform";
    case SourceKind::kDegree: return "degree";
    case SourceKind::kMaxDegree: return "max_degree";
  }
  return "uniform";
}

Hyperparams Hyperparams::molecule_defaults() {
  Hyperparams h;
  h.dims = {5, 5, 16};
  return h;
}

Hyperparams Hyperparams::synthetic_defaults() {
  Hyperparams h;
  h.dims = {7, 3, 16};
  h.mask = MaskConfig::none();
  return h;
}

void Hyperparams::validate() const {
  if (dims.latent < kNumAtomTypes) throw InputError("D must be at least 4");
  if (dims.hops < 1) throw InputError("K must be at least 1");
  if (dims.hidden < 1) throw InputError("hidden width must be at least 1");
  if (negatives < 1) throw InputError("L must be at least 1");
  if (source_samples < 1) throw InputError("S must be at least 1");
  if (batch_size < 1) throw InputError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finaliser over a golden-ratio stride
  std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int sample_source(const MolecularGraph& g, SourceKind kind, std::mt19937_64& rng,
                  std::span<const int> nodes) {
  std::vector<int> pool(nodes.begin(), nodes.end());
  if (pool.empty())
    for (int u = 0; u < static_cast<int>(g.size()); ++u) pool.push_back(u);
  if (pool.empty()) throw InputError("sample_source: graph has no nodes");

  if (kind == SourceKind::kMaxDegree) {
    int best = -1;
    for (int u : pool) best = std::max(best, g.degree(u));
    std::erase_if(pool, [&](int u) { return g.degree(u) != best; });
  } else if (kind == SourceKind::kDegree) {
    std::vector<double> weights;
    double total = 0.0;
    for (int u : pool) {
      weights.push_back(g.degree(u));
      total += g.degree(u);
    }
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      return pool[pick(rng)];
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

std::vector<Bond> bfs_edge_order(const MolecularGraph& g, int source, std::mt19937_64& rng,
                                 SourceKind restart) {
  const int n = static_cast<int>(g.size());
  if (source < 0 || source >= n) throw InputError("bfs: source out of range");
  std::vector<char> visited(n, 0), dequeued(n, 0);
  std::vector<int> parent(n, -1);
  std::vector<Bond> order;
  order.reserve(g.num_bonds());
  std::deque<int> queue;
  int remaining = n;
  int start = source;
  while (true) {
    visited[start] = 1;
    --remaining;
    queue.push_back(start);
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      dequeued[u] = 1;
      std::vector<std::pair<int, int>> nbrs = g.neighbors(u);
      std::shuffle(nbrs.begin(), nbrs.end(), rng);
      for (auto [v, m] : nbrs) {
        if (!visited[v]) {
          visited[v] = 1;
          --remaining;
          parent[v] = u;
          queue.push_back(v);
          order.push_back({u, v, m});
        } else if (dequeued[v] && v != u) {
          if (parent[u] != v) order.push_back({v, u, m});
        }
      }
    }
    if (remaining == 0) break;
    std::vector<int> unvisited;
    for (int u = 0; u < n; ++u)
      if (!visited[u]) unvisited.push_back(u);
    start = sample_source(g, restart, rng, unvisited);
  }
  return order;
}

double kl_term(const Posterior& post) {
  double total = 0.0;
  for (std::size_t i = 0; i < post.mu.size(); ++i) {
    const double s2 = post.sigma[i] * post.sigma[i];
    total += s2 + post.mu[i] * post.mu[i] - 1.0 - std::log(s2);
  }
  return 0.5 * total;
}

Var kl_term(const PosteriorVars& post) {
  Var s2 = square(post.sigma);
  Var inner = s2 + square(post.mu) - log(s2);
  const double count = static_cast<double>(post.mu.value().size());
  return add_const(scale(sum_all(inner), 0.5), -0.5 * count);
}

double fit_lambda_n(std::span<const MolecularGraph> corpus) {
  if (corpus.empty()) throw InputError("fit_lambda_n: empty corpus");
  double total = 0.0;
  for (const auto& g : corpus) total += static_cast<double>(g.size());
  return total / static_cast<double>(corpus.size());
}

Var elbo(const MolecularGraph& g, const ModelParams& params, const ModelVars& vars,
         const Hyperparams& hyper, std::mt19937_64& rng) {
  Tape& tape = *vars.all.front().tape;
  PosteriorVars post = posterior(tape, g, vars.encoder);
  Var z = reparameterize(post, standard_normal(g.size(), params.dims.latent, rng));

  const PartitionOptions partition{hyper.exact_partition, hyper.negatives};
  Var likelihood;
  for (std::size_t s = 0; s < hyper.source_samples; ++s) {
    const int source = sample_source(g, hyper.source, rng);
    const std::vector<Bond> order = bfs_edge_order(g, source, rng, hyper.source);
    const LikelihoodPlan plan = make_plan(g, order, hyper.mask, partition, rng);
    Var lp = graph_logprob(z, vars.decoder, plan);
    likelihood = s == 0 ? lp : likelihood + lp;
  }
  if (hyper.source_samples > 1)
    likelihood = scale(likelihood, 1.0 / static_cast<double>(hyper.source_samples));
  const double node_count = poisson_logpmf(g.size(), std::log(params.lambda_n));
  return add_const(likelihood - kl_term(post), node_count);
}

double elbo_value(const MolecularGraph& g, const ModelParams& params, const Hyperparams& hyper,
                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tape tape;
  ModelVars vars = bind(tape, params, false);
  return elbo(g, params, vars, hyper, rng).value().item();
}

ElboGradient elbo_gradient(const MolecularGraph& g, const ModelParams& params,
                           const Hyperparams& hyper, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tape tape;
  ModelVars vars = bind(tape, params, true);
  Var value = elbo(g, params, vars, hyper, rng);
  return {value.value().item(), tape.gradients(value, vars.all)};
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const MolecularGraph> corpus,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw InputError("batch size must be positive");
  std::map<std::size_t, std::vector<std::size_t>> by_size;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_size[corpus[i].size()].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (const auto& [n, members] : by_size)
    for (std::size_t start = 0; start < members.size(); start += batch_size)
      batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                           members.begin() +
                               static_cast<std::ptrdiff_t>(std::min(start + batch_size, members.size())));
  return batches;
}

TrainResult train(std::span<const MolecularGraph> corpus, const Hyperparams& hyper,
                  const ModelParams* init, const TrainCallback& on_iteration) {
  hyper.validate();
  if (corpus.empty()) throw InputError("train: empty corpus");
  TrainResult result;
  result.params = init ? *init : ModelParams::init(hyper.dims, hyper.seed);
  result.params.lambda_n = fit_lambda_n(corpus);

  const auto batches = make_batches(corpus, hyper.batch_size);
  std::vector<Tensor*> tensors = result.params.tensors();
  std::vector<Tensor> snapshot;
  for (const Tensor* t : tensors) snapshot.push_back(*t);
  AdamState adam({hyper.learning_rate}, snapshot);

  std::mt19937_64 rng(derive_seed(hyper.seed, 0x7261696eULL));
  std::uniform_int_distribution<std::size_t> pick(0, batches.size() - 1);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t it = 0; it < hyper.iterations; ++it) {
    const auto& batch = batches[pick(rng)];
    const std::uint64_t iteration_seed = derive_seed(hyper.seed, it + 1);
    BatchResult br;
    try {
      br = batch_elbo_parallel(corpus, batch, result.params, hyper, iteration_seed);
      adam_step(tensors, br.grads, adam);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
    TrainLogRow row{it, br.mean_elbo,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    result.log.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  return result;
}

double corpus_elbo(std::span<const MolecularGraph> corpus, const ModelParams& params,
                   const Hyperparams& hyper, std::uint64_t seed) {
  if (corpus.empty()) throw InputError("corpus_elbo: empty corpus");
  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return batch_elbo_values_parallel(corpus, all, params, hyper, seed);
}

}  // namespace nevae
