#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nevae {

/// One parsed command line. Unset optionals fall back to per-command defaults.
struct RunConfig {
  std::string command;  // train, sample, interpolate, perturb, synth, bo, gen-corpus
  std::string corpus;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mask;  // none | valence | triangle-free
  std::optional<std::size_t> latent;
  std::optional<std::size_t> hops;
  std::optional<std::size_t> negatives;
  std::optional<double> learning_rate;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> count;
  std::string out_dir = ".";

  std::string mode = "prior";  // sample: prior | posterior:<id>
  std::size_t from = 0, to = 1, steps = 5;  // interpolate
  std::size_t molecule = 0, node = 0;       // perturb
  std::vector<double> amplitudes = {0.0, 0.5, 1.0, 2.0};
  std::string experiment;                   // synth
  std::size_t samples = 1000;               // synth: decoded samples
  std::size_t bo_iterations = 5, bo_batch = 50, inducing = 100;
  double test_fraction = 0.1;
  int max_atoms = 12;                       // gen-corpus
};

/// Runs one subcommand, writing its outputs under out_dir.
/// Throws InputError for usage or input problems; other errors are runtime failures.
void run_command(const RunConfig& config);

}  // namespace nevae
