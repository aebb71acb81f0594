#include "nevae/cli.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string_view>

#include <nlohmann/json.hpp>

#include "nevae/bo.h"
#include "nevae/checkpoint.h"
#include "nevae/decoder.h"
#include "nevae/encoder.h"
#include "nevae/error.h"
#include "nevae/metrics.h"
#include "nevae/molgraph.h"
#include "nevae/parallel.h"
#include "nevae/property.h"
#include "nevae/sgp.h"
#include "nevae/synth.h"
#include "nevae/training.h"

namespace nevae {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- plumbing ----------------------------------------------------------------

std::string require_file(const std::string& path, std::string_view flag) {
  if (path.empty()) throw InputError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw InputError(std::string(flag) + ": no such file: " + path);
  return path;
}

std::uint64_t require_seed(const RunConfig& c) {
  if (!c.seed) throw InputError("--seed is required for " + c.command);
  return *c.seed;
}

fs::path prepare_out_dir(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec || !fs::is_directory(c.out_dir)) throw InputError("--out-dir: cannot create " + c.out_dir);
  return fs::path(c.out_dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json metadata(const RunConfig& c, json scale = json::object()) {
  json m = {{"command", c.command}};
  if (c.seed) m["seed"] = *c.seed;
  if (!scale.empty()) m["desk_scale"] = std::move(scale);
  return m;
}

std::vector<MolecularGraph> load_corpus(const RunConfig& c) {
  auto corpus = read_corpus_file(require_file(c.corpus, "--corpus"));
  if (corpus.empty()) throw InputError("--corpus: no molecules in " + c.corpus);
  return corpus;
}

Checkpoint load_model(const RunConfig& c) { return load_checkpoint(require_file(c.checkpoint, "--checkpoint")); }

const MolecularGraph& corpus_item(const std::vector<MolecularGraph>& corpus, std::size_t id) {
  if (id >= corpus.size())
    throw InputError("molecule id " + std::to_string(id) + " out of range (corpus has " +
                     std::to_string(corpus.size()) + ")");
  return corpus[id];
}

void apply_overrides(const RunConfig& c, Hyperparams& h) {
  if (c.latent) h.dims.latent = *c.latent;
  if (c.hops) h.dims.hops = *c.hops;
  if (c.negatives) h.negatives = *c.negatives;
  if (c.learning_rate) h.learning_rate = *c.learning_rate;
  if (c.iterations) h.iterations = *c.iterations;
  if (c.batch_size) h.batch_size = *c.batch_size;
  if (c.mask) h.mask = parse_mask_config(*c.mask);
  if (c.seed) h.seed = *c.seed;
  h.validate();
}

MaskConfig mask_or(const RunConfig& c, const MaskConfig& fallback) {
  return c.mask ? parse_mask_config(*c.mask) : fallback;
}

void write_molecules(const fs::path& dir, const std::string& stem, const std::vector<MolecularGraph>& graphs) {
  write_corpus_file((dir / (stem + ".jsonl")).string(), graphs);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%02zu.dot", stem.c_str(), i);
    open_out(dir / name) << to_dot(graphs[i], stem + "_" + std::to_string(i));
  }
}

// ---- train -------------------------------------------------------------------

void cmd_train(const RunConfig& c) {
  const auto corpus = load_corpus(c);
  const std::uint64_t seed = require_seed(c);
  const fs::path dir = prepare_out_dir(c);
  Hyperparams hyper = Hyperparams::molecule_defaults();
  apply_overrides(c, hyper);
  hyper.seed = seed;
  const std::string ckpt_path = c.checkpoint.empty() ? (dir / "model.ckpt").string() : c.checkpoint;

  std::ofstream log = open_out(dir / "elbo_log.csv");
  log << "iteration,mean_elbo,seconds\n";
  log.precision(17);
  const TrainResult r = train(corpus, hyper, nullptr, [&](const TrainLogRow& row) {
    log << row.iteration << ',' << row.mean_elbo << ',' << row.seconds << '\n';
  });
  save_checkpoint(ckpt_path, {r.params, hyper, hyper.iterations});
  std::printf("trained %zu iterations on %zu molecules; final mean ELBO %.4f; checkpoint %s\n", r.log.size(),
              corpus.size(), r.log.empty() ? 0.0 : r.log.back().mean_elbo, ckpt_path.c_str());
}

// ---- sample ------------------------------------------------------------------

void cmd_sample(const RunConfig& c) {
  const Checkpoint ck = load_model(c);
  const auto corpus = load_corpus(c);
  const std::uint64_t seed = require_seed(c);
  const std::size_t count = c.count.value_or(100);
  if (count == 0) throw InputError("--count must be positive");
  const MaskConfig mask = mask_or(c, ck.hyper.mask);
  const fs::path dir = prepare_out_dir(c);

  std::vector<MolecularGraph> graphs;
  if (c.mode == "prior") {
    SampleOptions opt;
    opt.mask = mask;
    for (Sample& s : sample_graphs_parallel(ck.params, count, opt, seed)) graphs.push_back(std::move(s.graph));
  } else if (c.mode.starts_with("posterior:")) {
    std::size_t id = 0;
    try {
      id = std::stoul(c.mode.substr(10));
    } catch (const std::exception&) {
      throw InputError("--mode: expected posterior:<molecule id>, got " + c.mode);
    }
    const Posterior post = posterior(corpus_item(corpus, id), ck.params);
    for (std::size_t i = 0; i < count; ++i) {
      std::mt19937_64 rng(derive_seed(seed, i));
      const Tensor z = sample_latent(post, rng);
      graphs.push_back(sample_from_latent(ck.params.decoder, z, mask, rng).graph);
    }
  } else {
    throw InputError("--mode: expected prior or posterior:<id>, got " + c.mode);
  }
  write_corpus_file((dir / "samples.jsonl").string(), graphs);
  json j = json::parse(metrics_to_json(compute_metrics(graphs, corpus, mask.table)));
  j["mode"] = c.mode;
  j["mask"] = mask_config_name(mask);
  j["metadata"] = metadata(c, {{"samples", count}, {"paper_samples", 1000000}});
  write_json(dir / "metrics.json", j);
  std::printf("%s\n", j.dump().c_str());
}

// ---- interpolate / perturb ---------------------------------------------------

void cmd_interpolate(const RunConfig& c) {
  const Checkpoint ck = load_model(c);
  const auto corpus = load_corpus(c);
  if (c.steps == 0) throw InputError("--steps must be positive");
  const MolecularGraph& a = corpus_item(corpus, c.from);
  const MolecularGraph& b = corpus_item(corpus, c.to);
  if (a.size() != b.size())
    throw InputError("interpolation needs molecules of equal size (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + " atoms)");
  const MaskConfig mask = mask_or(c, ck.hyper.mask);
  const fs::path dir = prepare_out_dir(c);
  std::mt19937_64 rng(c.seed.value_or(0));
  const Tensor za = sample_latent(posterior(a, ck.params), rng);
  const Tensor zb = sample_latent(posterior(b, ck.params), rng);

  std::vector<MolecularGraph> out;
  json steps = json::array();
  for (std::size_t i = 0; i < c.steps; ++i) {
    const double w = c.steps == 1 ? 1.0 : 1.0 - static_cast<double>(i) / static_cast<double>(c.steps - 1);
    Tensor z = za;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = w * za[k] + (1.0 - w) * zb[k];
    out.push_back(sample_from_latent(ck.params.decoder, z, mask, rng).graph);
    steps.push_back({{"step", i}, {"a", w}, {"valid", is_valid_molecule(out.back(), mask.table)}});
  }
  write_molecules(dir, "interpolate", out);
  write_json(dir / "interpolate.json", {{"from", c.from}, {"to", c.to}, {"steps", steps}, {"metadata", metadata(c)}});
}

void cmd_perturb(const RunConfig& c) {
  const Checkpoint ck = load_model(c);
  const auto corpus = load_corpus(c);
  const MolecularGraph& g = corpus_item(corpus, c.molecule);
  if (c.node >= g.size())
    throw InputError("--node " + std::to_string(c.node) + " out of range (molecule has " +
                     std::to_string(g.size()) + " atoms)");
  if (c.amplitudes.empty()) throw InputError("--amplitudes must list at least one value");
  const MaskConfig mask = mask_or(c, ck.hyper.mask);
  const fs::path dir = prepare_out_dir(c);
  const std::uint64_t seed = c.seed.value_or(0);
  std::mt19937_64 rng(seed);
  const Tensor z0 = sample_latent(posterior(g, ck.params), rng);

  std::vector<MolecularGraph> out;
  json rows = json::array();
  for (double amp : c.amplitudes) {
    Tensor z = z0;
    for (std::size_t j = 0; j < z.cols(); ++j) z(c.node, j) += amp * z0(c.node, j);
    // The same decoding stream for every amplitude, so differences come from the latent shift.
    std::mt19937_64 decode_rng(derive_seed(seed, 1));
    out.push_back(sample_from_latent(ck.params.decoder, z, mask, decode_rng).graph);
    rows.push_back({{"amplitude", amp}, {"valid", is_valid_molecule(out.back(), mask.table)}});
  }
  write_molecules(dir, "perturb", out);
  write_json(dir / "perturb.json",
             {{"molecule", c.molecule}, {"node", c.node}, {"results", rows}, {"metadata", metadata(c)}});
}

// ---- synth -------------------------------------------------------------------

Hyperparams synth_hyper(const RunConfig& c, std::size_t default_iters) {
  Hyperparams h = Hyperparams::synthetic_defaults();
  h.iterations = default_iters;
  h.seed = c.seed.value_or(0);
  apply_overrides(c, h);
  return h;
}

json synth_triangle_free(const RunConfig& c) {
  const std::size_t graphs = c.count.value_or(100);
  const auto corpus = triangle_free_corpus(graphs, 5, 30, 3.0, c.seed.value_or(0));
  Hyperparams h = synth_hyper(c, 300);
  if (!c.mask) h.mask = MaskConfig::triangle_free_only();
  const TrainResult r = train(corpus, h);
  SampleOptions opt;
  opt.mask = h.mask;
  std::size_t clean = 0, edges = 0;
  for (const Sample& s : sample_graphs_parallel(r.params, c.samples, opt, derive_seed(h.seed, 1))) {
    clean += count_triangles(s.graph) == 0 ? 1 : 0;
    edges += s.graph.num_bonds();
  }
  return {{"validity", static_cast<double>(clean) / static_cast<double>(c.samples)},
          {"mean_edges", static_cast<double>(edges) / static_cast<double>(c.samples)},
          {"mask", mask_config_name(h.mask)},
          {"metadata", metadata(c, {{"graphs", graphs}, {"samples", c.samples}, {"max_nodes", 30},
                                    {"iterations", h.iterations}})}};
}

// Rank correlation and top/bottom precision of model scores against the true likelihood.
json ranking_report(const std::vector<MolecularGraph>& graphs, const std::vector<double>& truth,
                    const ModelParams& params, const Hyperparams& h) {
  std::vector<double> ptheta, elbo;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    ptheta.push_back(prior_expected_loglik(graphs[i], params, h, 20, derive_seed(h.seed, 100 + i)));
    double e = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) e += elbo_value(graphs[i], params, h, derive_seed(h.seed, 10000 + 5 * i + s));
    elbo.push_back(e / 5.0);
  }
  const auto tp = rank_by_score(truth);
  // Correlations over the top tenth of the reference ranking.
  const std::size_t keep = std::max<std::size_t>(2, tp.size() / 10);
  const std::vector<std::size_t> top(tp.begin(), tp.begin() + static_cast<std::ptrdiff_t>(keep));
  auto rerank = [&](const std::vector<double>& score, const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> out = ids;
    std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    return out;
  };
  const Precision gp = precision_top_bottom(tp, rank_by_score(ptheta), 0.1);
  const Precision ge = precision_top_bottom(tp, rank_by_score(elbo), 0.1);
  return {{"rho_ptheta", spearman(top, rerank(ptheta, top))},
          {"rho_elbo", spearman(top, rerank(elbo, top))},
          {"gamma_top_ptheta", gp.top},
          {"gamma_bottom_ptheta", gp.bottom},
          {"gamma_top_elbo", ge.top},
          {"gamma_bottom_elbo", ge.bottom}};
}

json synth_kronecker(const RunConfig& c) {
  const std::size_t graphs = c.count.value_or(100);
  KroneckerSpec spec;
  spec.initiator = {{{0.9, 0.6}, {0.3, 0.2}}};
  spec.power = 4;
  std::mt19937_64 rng(c.seed.value_or(0));
  std::vector<MolecularGraph> corpus;
  std::vector<double> truth;
  for (std::size_t i = 0; i < graphs; ++i) {
    corpus.push_back(gen_kronecker(spec, rng));
    truth.push_back(loglik_kronecker(corpus.back(), spec));
  }
  const Hyperparams h = synth_hyper(c, 300);
  const TrainResult r = train(corpus, h);
  json j = ranking_report(corpus, truth, r.params, h);
  j["metadata"] = metadata(c, {{"graphs", graphs}, {"nodes", spec.num_nodes()}, {"iterations", h.iterations}});
  return j;
}

json synth_ba(const RunConfig& c) {
  const std::size_t graphs = c.count.value_or(100);
  const std::size_t nodes = 16;
  std::mt19937_64 rng(c.seed.value_or(0));
  std::vector<MolecularGraph> corpus;
  std::vector<double> truth;
  for (std::size_t i = 0; i < graphs; ++i) {
    const BaGraph g = gen_ba(nodes, 1, rng);
    truth.push_back(loglik_ba(g));
    corpus.push_back(g.graph);
  }
  const Hyperparams h = synth_hyper(c, 300);
  const TrainResult r = train(corpus, h);
  json j = ranking_report(corpus, truth, r.params, h);
  j["metadata"] = metadata(c, {{"graphs", graphs}, {"nodes", nodes}, {"m", 1}, {"iterations", h.iterations}});
  return j;
}

std::vector<double> decoder_vector(const ModelParams& p) {
  std::vector<double> out;
  const auto names = p.tensor_names();
  const auto tensors = p.tensors();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].starts_with("decoder.")) out.insert(out.end(), tensors[i]->data().begin(), tensors[i]->data().end());
  return out;
}

// Mean pairwise distance between decoder weights learned from relabeled copies
// of one graph, against training length. Each point retrains from scratch, so it
// equals the same run stopped early.
json drift_curves(const MolecularGraph& base, const RunConfig& c, std::size_t copies) {
  const std::uint64_t seed = c.seed.value_or(0);
  std::mt19937_64 rng(derive_seed(seed, 7));
  std::vector<std::vector<MolecularGraph>> versions;
  for (std::size_t k = 0; k < copies; ++k) {
    std::vector<int> perm(base.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    versions.push_back({base.relabeled(perm)});
  }
  const std::size_t total = c.iterations.value_or(100);
  const std::size_t points = std::min<std::size_t>(10, total);
  json curves = json::object();
  for (SourceKind kind : {SourceKind::kUniform, SourceKind::kDegree, SourceKind::kMaxDegree}) {
    json curve = json::array();
    for (std::size_t p = 1; p <= points; ++p) {
      RunConfig local = c;
      local.iterations = total * p / points;
      Hyperparams h = synth_hyper(local, total);
      h.batch_size = 1;
      h.source = kind;
      std::vector<std::vector<double>> weights;
      for (const auto& v : versions) weights.push_back(decoder_vector(train(v, h).params));
      double sum = 0.0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < copies; ++a)
        for (std::size_t b = a + 1; b < copies; ++b, ++pairs) {
          double d2 = 0.0;
          for (std::size_t i = 0; i < weights[a].size(); ++i) d2 += std::pow(weights[a][i] - weights[b][i], 2);
          sum += std::sqrt(d2);
        }
      curve.push_back({{"iteration", h.iterations}, {"mean_distance", sum / static_cast<double>(pairs)}});
    }
    curves[std::string(source_kind_name(kind))] = curve;
  }
  return curves;
}

json synth_perm_drift(const RunConfig& c) {
  const std::size_t copies = c.count.value_or(4);
  if (copies < 2) throw InputError("--count: perm_drift needs at least 2 relabeled copies");
  std::mt19937_64 rng(c.seed.value_or(0));
  const MolecularGraph ba = gen_ba(32, 1, rng).graph;
  KroneckerSpec spec;
  spec.initiator = {{{0.6, 0.6}, {0.6, 0.6}}};
  spec.power = 5;
  const MolecularGraph kron = gen_kronecker(spec, rng);
  return {{"ba", drift_curves(ba, c, copies)},
          {"kronecker", drift_curves(kron, c, copies)},
          {"metadata", metadata(c, {{"copies", copies}, {"nodes", 32}, {"paper_nodes", 1000}})}};
}

void cmd_synth(const RunConfig& c) {
  json j;
  if (c.experiment == "triangle_free") {
    j = synth_triangle_free(c);
  } else if (c.experiment == "kronecker") {
    j = synth_kronecker(c);
  } else if (c.experiment == "ba") {
    j = synth_ba(c);
  } else if (c.experiment == "perm_drift") {
    j = synth_perm_drift(c);
  } else {
    throw InputError("--experiment: expected triangle_free, kronecker, ba or perm_drift, got \"" + c.experiment +
                     "\"");
  }
  j["experiment"] = c.experiment;
  const fs::path dir = prepare_out_dir(c);
  write_json(dir / ("synth_" + c.experiment + ".json"), j);
  std::printf("%s\n", j.dump().c_str());
}

// ---- bo ----------------------------------------------------------------------

void cmd_bo(const RunConfig& c) {
  const Checkpoint ck = load_model(c);
  const auto corpus = load_corpus(c);
  const std::uint64_t seed = require_seed(c);
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw InputError("--test-fraction must be in (0, 1)");
  if (c.bo_iterations == 0 || c.bo_batch == 0) throw InputError("--bo-iters and --bo-batch must be positive");
  const fs::path dir = prepare_out_dir(c);

  const PropertyOracle oracle = make_proxy_oracle(ck.params.lambda_n);
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (is_valid_molecule(corpus[i])) usable.push_back(i);
  const std::size_t n_test = static_cast<std::size_t>(std::llround(c.test_fraction * static_cast<double>(usable.size())));
  if (n_test == 0 || n_test + 2 > usable.size())
    throw InputError("--corpus: " + std::to_string(usable.size()) + " valid molecules are too few for a " +
                     std::to_string(c.test_fraction) + " test split");
  std::mt19937_64 rng(seed);
  std::shuffle(usable.begin(), usable.end(), rng);

  std::vector<MolecularGraph> train_graphs, test_graphs;
  std::vector<double> train_scores;
  Eigen::MatrixXd x_test(static_cast<Eigen::Index>(n_test), static_cast<Eigen::Index>(2 * ck.params.dims.latent));
  Eigen::VectorXd y_test(static_cast<Eigen::Index>(n_test));
  for (std::size_t k = 0; k < usable.size(); ++k) {
    const MolecularGraph& g = corpus[usable[k]];
    if (k < n_test) {
      x_test.row(static_cast<Eigen::Index>(k)) = molecule_embedding(posterior(g, ck.params)).transpose();
      y_test[static_cast<Eigen::Index>(k)] = oracle.score(g);
    } else {
      train_graphs.push_back(g);
      train_scores.push_back(oracle.score(g));
    }
  }

  MoleculeBoOptions opt;
  opt.bo.iterations = c.bo_iterations;
  opt.bo.batch = c.bo_batch;
  opt.bo.seed = seed;
  opt.bo.sgp.n_inducing = std::min(c.inducing, train_graphs.size());
  opt.bo.sgp.seed = seed;
  opt.mask = mask_or(c, ck.hyper.mask);

  Eigen::MatrixXd x_train(static_cast<Eigen::Index>(train_graphs.size()), x_test.cols());
  for (std::size_t i = 0; i < train_graphs.size(); ++i)
    x_train.row(static_cast<Eigen::Index>(i)) = molecule_embedding(posterior(train_graphs[i], ck.params)).transpose();
  const Eigen::VectorXd y_train = Eigen::Map<const Eigen::VectorXd>(train_scores.data(),
                                                                    static_cast<Eigen::Index>(train_scores.size()));
  const HeldOutMetrics held = SgpModel::fit(x_train, y_train, opt.bo.sgp).evaluate(x_test, y_test);

  const MoleculeBoResult r = bo_loop(train_graphs, train_scores, ck.params, oracle, opt);

  json evals = json::array();
  for (const BoEvaluation& e : r.evaluations)
    evals.push_back({{"iteration", e.iteration}, {"score", e.y ? json(*e.y) : json(nullptr)}});
  json trace = {{"heldout", {{"log_likelihood", held.log_likelihood}, {"rmse", held.rmse}, {"test_size", n_test}}},
                {"proposals", r.proposals},
                {"fraction_valid", r.fraction_valid},
                {"fraction_connected", r.fraction_connected},
                {"fraction_unique", r.fraction_unique},
                {"oracle", oracle.name},
                {"inducing", opt.bo.sgp.n_inducing},
                {"evaluations", evals},
                {"metadata", metadata(c, {{"train_size", train_graphs.size()}, {"test_size", n_test}})}};
  write_json(dir / "bo_trace.json", trace);

  std::ofstream csv = open_out(dir / "scores.csv");
  csv << "rank,score,iteration,molecule\n";
  csv.precision(17);
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    std::string mol = serialize_molecule(r.ranked[i].graph);
    std::string quoted = "\"";
    for (char ch : mol) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    csv << i + 1 << ',' << r.ranked[i].score << ',' << r.ranked[i].iteration << ',' << quoted << "\"\n";
  }
  std::printf("held-out LL %.4f RMSE %.4f; valid %.2f connected %.2f unique %.2f over %zu proposals\n",
              held.log_likelihood, held.rmse, r.fraction_valid, r.fraction_connected, r.fraction_unique,
              r.proposals);
}

// ---- gen-corpus --------------------------------------------------------------

void cmd_gen_corpus(const RunConfig& c) {
  const std::size_t count = c.count.value_or(200);
  if (count == 0) throw InputError("--count must be positive");
  if (c.max_atoms < 1) throw InputError("--max-atoms must be positive");
  const fs::path dir = prepare_out_dir(c);
  const auto corpus = generate_desk_corpus(count, c.max_atoms, c.seed.value_or(0));
  const std::string path = c.corpus.empty() ? (dir / "corpus.jsonl").string() : c.corpus;
  write_corpus_file(path, corpus);
  std::printf("wrote %zu molecules to %s\n", corpus.size(), path.c_str());
}

}  // namespace

void run_command(const RunConfig& config) {
  if (config.command == "train") return cmd_train(config);
  if (config.command == "sample") return cmd_sample(config);
  if (config.command == "interpolate") return cmd_interpolate(config);
  if (config.command == "perturb") return cmd_perturb(config);
  if (config.command == "synth") return cmd_synth(config);
  if (config.command == "bo") return cmd_bo(config);
  if (config.command == "gen-corpus") return cmd_gen_corpus(config);
  throw InputError("unknown command \"" + config.command + "\"");
}

}  // namespace nevae
