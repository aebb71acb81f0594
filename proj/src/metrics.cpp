#include "nevae/metrics.h"

#include <unordered_set>

#include <nlohmann/json.hpp>

#include "nevae/certificate.h"
#include "nevae/error.h"

namespace nevae {

QualityMetrics compute_metrics(std::span<const MolecularGraph> samples,
                               std::span<const MolecularGraph> training_corpus,
                               const ValenceTable& table) {
  if (samples.empty()) throw InputError("compute_metrics: no samples");
  std::unordered_set<std::string> corpus;
  for (const auto& g : training_corpus) corpus.insert(canonical_certificate(g));

  QualityMetrics m;
  m.n_samples = samples.size();
  std::unordered_set<std::string> unique;
  for (const auto& g : samples) {
    if (satisfies_valence(g, table)) ++m.n_valence_valid;
    if (!is_valid_molecule(g, table)) continue;
    ++m.n_valid;
    std::string cert = canonical_certificate(g);
    if (!corpus.contains(cert)) ++m.n_novel_valid;
    unique.insert(std::move(cert));
  }
  m.n_unique_valid = unique.size();
  const double ns = static_cast<double>(m.n_samples);
  m.validity = static_cast<double>(m.n_valid) / ns;
  m.valence_validity = static_cast<double>(m.n_valence_valid) / ns;
  m.uniqueness = static_cast<double>(m.n_unique_valid) / ns;
  m.novelty = m.n_valid == 0 ? 0.0
                             : static_cast<double>(m.n_novel_valid) / static_cast<double>(m.n_valid);
  return m;
}

std::string metrics_to_json(const QualityMetrics& m) {
  nlohmann::json j = {{"validity", m.validity},       {"valence_validity", m.valence_validity},
                      {"novelty", m.novelty},
                      {"uniqueness", m.uniqueness},   {"n_samples", m.n_samples},
                      {"n_valid", m.n_valid},         {"n_valence_valid", m.n_valence_valid},
                      {"n_unique_valid", m.n_unique_valid},
                      {"n_novel_valid", m.n_novel_valid}};
  return j.dump(2);
}

}  // namespace nevae
