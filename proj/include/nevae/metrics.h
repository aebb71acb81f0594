#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "nevae/molgraph.h"

namespace nevae {

struct QualityMetrics {
  double validity = 0.0;
  double valence_validity = 0.0;  // valence rule only, connectivity ignored
  double novelty = 0.0;
  double uniqueness = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_valid = 0;
  std::size_t n_valence_valid = 0;
  std::size_t n_unique_valid = 0;
  std::size_t n_novel_valid = 0;
};

/// Validity = |C_s| / n_s, novelty = 1 - |C_s ∩ D| / |C_s| and
/// uniqueness = |set(C_s)| / n_s, where C_s is the list of valid samples and
/// membership is decided by canonical certificates. Novelty is 0 when no
/// sample is valid. Throws InputError on an empty sample list.
QualityMetrics compute_metrics(std::span<const MolecularGraph> samples,
                               std::span<const MolecularGraph> training_corpus,
                               const ValenceTable& table = {});

std::string metrics_to_json(const QualityMetrics& m);

}  // namespace nevae
