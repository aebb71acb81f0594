#include "nevae/decoder.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "nevae/error.h"

namespace nevae {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> dense_forward(const Dense& layer, std::span<const double> x, bool activate) {
  const std::size_t in = layer.weight.rows(), out = layer.weight.cols();
  std::vector<double> y(layer.bias.data().begin(), layer.bias.data().end());
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * layer.weight(i, j);
  }
  if (activate)
    for (double& v : y) v = softplus(v);
  return y;
}

std::vector<double> head_forward(const Head& head, std::span<const double> x) {
  std::vector<double> h = dense_forward(head.hidden, x, true);
  return dense_forward(head.output, h, false);
}

template <typename Range>
std::size_t draw_categorical(const Range& logprobs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = unif(rng);
  double acc = 0.0;
  std::size_t last = 0;
  std::size_t i = 0;
  for (double lp : logprobs) {
    if (lp != kNegInf) {
      acc += std::exp(lp);
      last = i;
      if (r < acc) return i;
    }
    ++i;
  }
  return last;  // rounding left a sliver of mass past the final entry
}

std::uint64_t pair_key(std::size_t u, std::size_t v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
}

}  // namespace

double poisson_logpmf(std::size_t k, double log_rate) {
  const double kd = static_cast<double>(k);
  return kd * log_rate - std::exp(log_rate) - std::lgamma(kd + 1.0);
}

// ---- DecoderEvaluator -------------------------------------------------------

DecoderEvaluator::DecoderEvaluator(const DecoderParams& params, const Tensor& z)
    : params_(params), z_(z), n_(z.rows()) {
  if (z.rank() != 2 || z.cols() != params.edge.hidden.weight.rows())
    throw ShapeError("decoder: latent matrix " + shape_string(z.shape()) +
                     " does not match decoder input width " +
                     std::to_string(params.edge.hidden.weight.rows()));
  std::vector<double> pooled(params.intensity_node.weight.cols(), 0.0);
  for (std::size_t u = 0; u < n_; ++u) {
    std::vector<double> h =
        dense_forward(params.intensity_node, z_.data().subspan(u * z_.cols(), z_.cols()), true);
    for (std::size_t j = 0; j < h.size(); ++j) pooled[j] += h[j];
  }
  log_intensity_ = dense_forward(params.intensity_out, pooled, false)[0];
  edge_cache_.assign(n_ * n_, 0.0);
  edge_cached_.assign(n_ * n_, 0);
}

std::array<double, kNumAtomTypes> DecoderEvaluator::feature_logprobs(int u) const {
  std::vector<double> logits =
      head_forward(params_.feature, z_.data().subspan(u * z_.cols(), z_.cols()));
  const double lse = logsumexp(logits);
  std::array<double, kNumAtomTypes> out{};
  for (std::size_t q = 0; q < kNumAtomTypes; ++q) out[q] = logits[q] - lse;
  return out;
}

namespace {

std::vector<double> pair_input(const Tensor& z, int u, int v) {
  std::vector<double> x(z.cols());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = z(u, j) + z(v, j);
  return x;
}

}  // namespace

double DecoderEvaluator::edge_logit(int u, int v) const {
  if (u > v) std::swap(u, v);
  const std::size_t slot = static_cast<std::size_t>(u) * n_ + static_cast<std::size_t>(v);
  if (!edge_cached_[slot]) {
    edge_cache_[slot] = head_forward(params_.edge, pair_input(z_, u, v))[0];
    edge_cached_[slot] = 1;
  }
  return edge_cache_[slot];
}

std::array<double, kMaxBondOrder> DecoderEvaluator::weight_logits(int u, int v) const {
  std::vector<double> y = head_forward(params_.weight, pair_input(z_, u, v));
  std::array<double, kMaxBondOrder> out{};
  std::copy(y.begin(), y.end(), out.begin());
  return out;
}

double feature_logprob(const DecoderEvaluator& eval, int u, Atom q) {
  return eval.feature_logprobs(u)[static_cast<std::size_t>(q)];
}

double edge_step_logprob(const DecoderEvaluator& eval, const MaskState& state, int u, int v) {
  const auto candidates = state.candidate_pairs();
  if (candidates.empty()) throw NoCandidateError("edge step: no candidate pair left");
  std::vector<double> logits;
  logits.reserve(candidates.size());
  for (auto [a, b] : candidates) logits.push_back(eval.edge_logit(a, b));
  if (!state.is_candidate(u, v)) return kNegInf;
  return eval.edge_logit(u, v) - logsumexp(logits);
}

std::optional<std::array<double, kMaxBondOrder>> weight_step_logprobs(
    const DecoderEvaluator& eval, const MaskState& state, int u, int v) {
  const auto logits = eval.weight_logits(u, v);
  std::vector<double> allowed;
  std::array<bool, kMaxBondOrder> ok{};
  for (int m = 1; m <= kMaxBondOrder; ++m) {
    ok[m - 1] = weight_mask(state, u, v, m);
    if (ok[m - 1]) allowed.push_back(logits[m - 1]);
  }
  if (allowed.empty()) return std::nullopt;
  const double lse = logsumexp(allowed);
  std::array<double, kMaxBondOrder> out{};
  for (int m = 0; m < kMaxBondOrder; ++m) out[m] = ok[m] ? logits[m] - lse : kNegInf;
  return out;
}

double weight_step_logprob(const DecoderEvaluator& eval, const MaskState& state, int u, int v,
                           int order) {
  if (order < 1 || order > kMaxBondOrder)
    throw InputError("bond order " + std::to_string(order) + " outside 1..3");
  auto lp = weight_step_logprobs(eval, state, u, v);
  if (!lp) throw NoCandidateError("weight step: every bond order is masked");
  return (*lp)[order - 1];
}

// ---- sampling ---------------------------------------------------------------

std::size_t GenerationTrace::num_committed() const {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const GenerationStep& s) { return !s.rejected; }));
}

double GenerationTrace::total_logprob() const {
  double total = edge_count_logprob;
  for (double lp : feature_logprobs) total += lp;
  for (const GenerationStep& s : steps) total += s.edge_logprob + s.weight_logprob;
  return total;
}

Sample sample_from_latent(const DecoderParams& params, const Tensor& z, const MaskConfig& mask,
                          std::mt19937_64& rng) {
  DecoderEvaluator eval(params, z);
  const int n = static_cast<int>(eval.num_nodes());
  Sample out;
  GenerationTrace& trace = out.trace;

  for (int u = 0; u < n; ++u) {
    const auto lp = eval.feature_logprobs(u);
    const std::size_t q = draw_categorical(lp, rng);
    trace.atoms.push_back(static_cast<Atom>(q));
    trace.feature_logprobs.push_back(lp[q]);
  }

  const double rate = std::exp(eval.log_edge_intensity());
  if (!std::isfinite(rate)) throw NumericError("decoder: edge intensity overflowed");
  std::poisson_distribution<long long> poisson(rate);
  trace.edge_count = static_cast<std::size_t>(poisson(rng));
  trace.edge_count_logprob = poisson_logpmf(trace.edge_count, eval.log_edge_intensity());

  MaskState state(trace.atoms, mask);
  std::vector<Bond> bonds;
  std::vector<double> logits;
  while (bonds.size() < trace.edge_count) {
    const auto candidates = state.candidate_pairs();
    if (candidates.empty()) {
      trace.stopped_early = true;
      break;
    }
    logits.clear();
    for (auto [a, b] : candidates) logits.push_back(eval.edge_logit(a, b));
    const double lse = logsumexp(logits);
    for (double& v : logits) v -= lse;
    const std::size_t pick = draw_categorical(logits, rng);
    GenerationStep step;
    step.u = candidates[pick].first;
    step.v = candidates[pick].second;
    step.edge_logprob = logits[pick];
    const auto weights = weight_step_logprobs(eval, state, step.u, step.v);
    if (!weights) {
      step.rejected = true;
      state.reject(step.u, step.v);
      trace.steps.push_back(step);
      continue;
    }
    const std::size_t m = draw_categorical(*weights, rng);
    step.order = static_cast<int>(m) + 1;
    step.weight_logprob = (*weights)[m];
    state.commit(step.u, step.v, step.order);
    bonds.push_back({step.u, step.v, step.order});
    trace.steps.push_back(step);
  }
  out.graph = MolecularGraph(trace.atoms, bonds);
  return out;
}

Sample sample_graph(const ModelParams& params, std::mt19937_64& rng, const SampleOptions& options) {
  std::size_t n = 0;
  if (options.num_nodes) {
    n = *options.num_nodes;
    if (n == 0) throw InputError("sample_graph: node count must be positive");
  } else {
    if (!(params.lambda_n > 0.0)) throw InputError("sample_graph: lambda_n must be positive");
    std::poisson_distribution<long long> poisson(params.lambda_n);
    while (n == 0) n = static_cast<std::size_t>(poisson(rng));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z({n, params.dims.latent});
  for (double& v : z.data()) v = normal(rng);
  return sample_from_latent(params.decoder, z, options.mask, rng);
}

// ---- likelihood -------------------------------------------------------------

namespace {

/// Up to `count` distinct candidates other than (u, v), uniformly without
/// replacement. `others` is the number of such candidates.
std::vector<std::pair<int, int>> draw_negatives(const MaskState& state, int u, int v,
                                                std::size_t count, std::size_t others,
                                                std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> out;
  const auto& avail = state.available_nodes();
  const std::size_t a = avail.size();
  const std::size_t all_pairs = a < 2 ? 0 : a * (a - 1) / 2;
  const bool rejection = state.counts_incrementally() && others > 2 * count &&
                         4 * (others + 1) >= all_pairs;
  if (rejection) {
    std::uniform_int_distribution<std::size_t> pick(0, a - 1);
    std::unordered_set<std::uint64_t> chosen;
    const std::uint64_t positive = pair_key(u, v);
    while (out.size() < count) {
      const int x = avail[pick(rng)], y = avail[pick(rng)];
      if (x == y) continue;
      const std::uint64_t key = pair_key(x, y);
      if (key == positive || !state.is_candidate(x, y) || !chosen.insert(key).second) continue;
      out.emplace_back(std::min(x, y), std::max(x, y));
    }
    return out;
  }
  std::vector<std::pair<int, int>> pool;
  for (auto p : state.candidate_pairs())
    if (pair_key(p.first, p.second) != pair_key(u, v)) pool.push_back(p);
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace

LikelihoodPlan make_plan(const MolecularGraph& g, std::span<const Bond> edge_order,
                         const MaskConfig& mask, const PartitionOptions& partition,
                         std::mt19937_64& rng) {
  if (edge_order.size() != g.num_bonds())
    throw InputError("edge order has " + std::to_string(edge_order.size()) + " edges, graph has " +
                     std::to_string(g.num_bonds()));
  if (!partition.exact && partition.negatives == 0)
    throw InputError("negative sampling needs L >= 1");

  LikelihoodPlan plan;
  plan.num_nodes = g.size();
  plan.edge_count = edge_order.size();
  for (std::size_t u = 0; u < g.size(); ++u)
    plan.feature_index.push_back(u * kNumAtomTypes +
                                 static_cast<std::size_t>(g.atom(static_cast<int>(u))));

  std::unordered_map<std::uint64_t, std::size_t> rows;
  auto row = [&](int a, int b) {
    auto [it, fresh] = rows.try_emplace(pair_key(a, b), plan.pair_u.size());
    if (fresh) {
      plan.pair_u.push_back(static_cast<std::size_t>(std::min(a, b)));
      plan.pair_v.push_back(static_cast<std::size_t>(std::max(a, b)));
    }
    return it->second;
  };

  MaskState state(g.atoms(), mask);
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t k = 0; k < edge_order.size(); ++k) {
    const Bond& e = edge_order[k];
    const std::string where = "edge order step " + std::to_string(k) + " (" +
                              std::to_string(e.u) + "," + std::to_string(e.v) + ")";
    if (e.u < 0 || e.v < 0 || e.u >= static_cast<int>(g.size()) ||
        e.v >= static_cast<int>(g.size()) || g.bond_order(e.u, e.v) != e.order || e.order == 0)
      throw InputError(where + " is not a bond of the graph");
    if (!seen.insert(pair_key(e.u, e.v)).second) throw InputError(where + " repeats a bond");
    if (!state.is_candidate(e.u, e.v)) throw InputError(where + " is masked");
    if (!weight_mask(state, e.u, e.v, e.order)) throw InputError(where + " has a masked bond order");

    const std::size_t true_row = row(e.u, e.v);
    Segment seg;
    seg.index.push_back(true_row);
    if (partition.exact) {
      for (auto [a, b] : state.candidate_pairs())
        if (pair_key(a, b) != pair_key(e.u, e.v)) seg.index.push_back(row(a, b));
    } else {
      const std::size_t others = state.candidate_count() - 1;
      const std::size_t draws = std::min(partition.negatives, others);
      if (draws > 0) {
        const double offset =
            std::log(static_cast<double>(others) / static_cast<double>(draws));
        seg.offset.push_back(0.0);
        for (auto [a, b] : draw_negatives(state, e.u, e.v, draws, others, rng)) {
          seg.index.push_back(row(a, b));
          seg.offset.push_back(offset);
        }
      }
    }
    plan.edge_segments.push_back(std::move(seg));
    plan.edge_true.push_back(true_row);

    Segment wseg;
    for (int m = 1; m <= kMaxBondOrder; ++m)
      if (weight_mask(state, e.u, e.v, m)) wseg.index.push_back(true_row * kMaxBondOrder + m - 1);
    plan.weight_segments.push_back(std::move(wseg));
    plan.weight_true.push_back(true_row * kMaxBondOrder + static_cast<std::size_t>(e.order - 1));
    state.commit(e.u, e.v, e.order);
  }
  return plan;
}

namespace {

Var log_edge_intensity(const DecoderVars& dec, Var z) {
  Var pooled = sum(softplus(apply(dec.intensity_node, z)), 0);
  return apply(dec.intensity_out, pooled);
}

}  // namespace

Var graph_logprob(Var z, const DecoderVars& dec, const LikelihoodPlan& plan) {
  if (z.value().rank() != 2 || z.value().rows() != plan.num_nodes)
    throw ShapeError("graph_logprob: latent matrix " + shape_string(z.shape()) + " for " +
                     std::to_string(plan.num_nodes) + " nodes");
  Var feat_logits = apply(dec.feature, z);
  Var total = sum_all(gather(feat_logits, plan.feature_index)) -
              sum_all(logsumexp(feat_logits));

  const double l = static_cast<double>(plan.edge_count);
  Var log_rate = log_edge_intensity(dec, z);
  Var count = add_const(scale(log_rate, l) - exp(log_rate), -std::lgamma(l + 1.0));
  total = total + sum_all(count);

  if (plan.edge_count == 0) return total;
  Var pairs = gather_rows(z, plan.pair_u) + gather_rows(z, plan.pair_v);
  Var edge_logits = apply(dec.edge, pairs);
  Var weight_logits = apply(dec.weight, pairs);
  total = total + sum_all(gather(edge_logits, plan.edge_true)) -
          sum_all(segment_logsumexp(edge_logits, plan.edge_segments));
  total = total + sum_all(gather(weight_logits, plan.weight_true)) -
          sum_all(segment_logsumexp(weight_logits, plan.weight_segments));
  return total;
}

double graph_logprob(const MolecularGraph& g, const Tensor& z, std::span<const Bond> edge_order,
                     const DecoderParams& params, const MaskConfig& mask,
                     const PartitionOptions& partition, std::mt19937_64& rng) {
  LikelihoodPlan plan = make_plan(g, edge_order, mask, partition, rng);
  Tape tape;
  DecoderVars dec = bind_decoder(tape, params, false);
  return graph_logprob(tape.constant(z), dec, plan).value().item();
}

std::vector<double> edge_log_partitions(const Tensor& z, const DecoderParams& params,
                                        const LikelihoodPlan& plan) {
  if (plan.edge_count == 0) return {};
  Tape tape;
  DecoderVars dec = bind_decoder(tape, params, false);
  Var zv = tape.constant(z);
  Var pairs = gather_rows(zv, plan.pair_u) + gather_rows(zv, plan.pair_v);
  Var lse = segment_logsumexp(apply(dec.edge, pairs), plan.edge_segments);
  const auto values = lse.value().data();
  return {values.begin(), values.end()};
}

}  // namespace nevae
