// nevae: train, sample and explore molecular graph models from the command line.
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "nevae/cli.h"
#include "nevae/error.h"

namespace {

void add_common(CLI::App* sub, nevae::RunConfig& c) {
  sub->add_option("--corpus", c.corpus, "JSONL molecule corpus");
  sub->add_option("--checkpoint", c.checkpoint, "model checkpoint");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--mask", c.mask, "none, valence or triangle-free (comma-separated to combine)");
  sub->add_option("--D", c.latent, "latent width");
  sub->add_option("--K", c.hops, "aggregation hops");
  sub->add_option("--L", c.negatives, "negative samples per edge step");
  sub->add_option("--lr", c.learning_rate, "learning rate");
  sub->add_option("--iters", c.iterations, "training iterations");
  sub->add_option("--batch-size", c.batch_size, "minibatch size");
  sub->add_option("--count", c.count, "number of samples, graphs or copies");
  sub->add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  nevae::RunConfig c;
  CLI::App app{"Graph variational autoencoder for molecules and synthetic graphs"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model; writes a checkpoint and elbo_log.csv");
  auto* sample = app.add_subcommand("sample", "sample molecules; writes samples.jsonl and metrics.json");
  sample->add_option("--mode", c.mode, "prior or posterior:<molecule id>")->capture_default_str();
  auto* interp = app.add_subcommand("interpolate", "decode along a line between two encoded molecules");
  interp->add_option("--from", c.from, "first molecule id")->capture_default_str();
  interp->add_option("--to", c.to, "second molecule id")->capture_default_str();
  interp->add_option("--steps", c.steps, "number of decoded points")->capture_default_str();
  auto* perturb = app.add_subcommand("perturb", "decode after scaling one node's latent vector");
  perturb->add_option("--molecule", c.molecule, "molecule id")->capture_default_str();
  perturb->add_option("--node", c.node, "node index")->capture_default_str();
  perturb->add_option("--amplitudes", c.amplitudes, "relative shifts a: z_i + a z_i")->delimiter(',');
  auto* synth = app.add_subcommand("synth", "synthetic-graph experiments");
  synth->add_option("--experiment", c.experiment, "triangle_free, kronecker, ba or perm_drift")->required();
  synth->add_option("--samples", c.samples, "decoded samples for triangle_free")->capture_default_str();
  auto* bo = app.add_subcommand("bo", "Bayesian optimisation of a property in latent space");
  bo->add_option("--bo-iters", c.bo_iterations, "optimisation rounds")->capture_default_str();
  bo->add_option("--bo-batch", c.bo_batch, "proposals per round")->capture_default_str();
  bo->add_option("--inducing", c.inducing, "sparse GP inducing points")->capture_default_str();
  bo->add_option("--test-fraction", c.test_fraction, "held-out share of the corpus")->capture_default_str();
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic molecule corpus");
  gen->add_option("--max-atoms", c.max_atoms, "atoms per molecule, hydrogens included")->capture_default_str();

  for (CLI::App* sub : {train, sample, interp, perturb, synth, bo, gen}) add_common(sub, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  c.command = app.get_subcommands().front()->get_name();

  try {
    nevae::run_command(c);
  } catch (const nevae::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return 1;
  }
  return 0;
}
