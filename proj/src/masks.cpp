#include "nevae/masks.h"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "nevae/error.h"

namespace nevae {

bool ValenceMask::edge_allowed(const MaskState& state, int u, int v) const {
  return state.remaining_valence(u) >= 1 && state.remaining_valence(v) >= 1;
}

bool ValenceMask::weight_allowed(const MaskState& state, int u, int v, int order) const {
  return order <= state.remaining_valence(u) && order <= state.remaining_valence(v);
}

bool TriangleFreeMask::edge_allowed(const MaskState& state, int u, int v) const {
  const auto& nu = state.generated_neighbors(u);
  const auto& nv = state.generated_neighbors(v);
  if (nu.size() > nv.size()) std::swap(u, v);
  for (int w : state.generated_neighbors(u))
    if (state.is_generated(w, v)) return false;
  return true;
}

MaskConfig parse_mask_config(std::string_view text) {
  MaskConfig config;
  std::string item;
  std::istringstream in{std::string(text)};
  bool any = false;
  while (std::getline(in, item, ',')) {
    any = true;
    if (item == "none") continue;
    if (item == "valence") {
      config.valence = true;
    } else if (item == "triangle-free" || item == "triangle_free") {
      config.triangle_free = true;
    } else {
      throw InputError("unknown mask kind \"" + item + "\" (expected none, valence, triangle-free)");
    }
  }
  if (!any) throw InputError("empty mask specification");
  return config;
}

std::string mask_config_name(const MaskConfig& config) {
  if (config.valence && config.triangle_free) return "valence,triangle-free";
  if (config.valence) return "valence";
  if (config.triangle_free) return "triangle-free";
  return "none";
}

namespace {

std::vector<std::shared_ptr<const MaskProvider>> providers_for(const MaskConfig& config) {
  std::vector<std::shared_ptr<const MaskProvider>> out;
  if (config.valence) out.push_back(std::make_shared<ValenceMask>());
  if (config.triangle_free) out.push_back(std::make_shared<TriangleFreeMask>());
  return out;
}

}  // namespace

MaskState::MaskState(const std::vector<Atom>& atoms, const MaskConfig& config)
    : MaskState(atoms, config.table, providers_for(config)) {}

MaskState::MaskState(const std::vector<Atom>& atoms, const ValenceTable& table,
                     std::vector<std::shared_ptr<const MaskProvider>> providers)
    : remaining_(atoms.size()),
      committed_(atoms.size(), 0),
      generated_adj_(atoms.size()),
      blocked_adj_(atoms.size()),
      providers_(std::move(providers)),
      available_pos_(atoms.size(), -1) {
  for (std::size_t u = 0; u < atoms.size(); ++u) remaining_[u] = table(atoms[u]);
  for (const auto& p : providers_) {
    if (dynamic_cast<const ValenceMask*>(p.get()))
      valence_tracked_ = true;
    else
      incremental_ = false;
  }
  for (int u = 0; u < num_nodes(); ++u) {
    if (!node_available(u)) continue;
    available_pos_[u] = static_cast<int>(available_.size());
    available_.push_back(u);
  }
}

bool MaskState::is_candidate(int u, int v) const {
  if (u == v || u < 0 || v < 0 || u >= num_nodes() || v >= num_nodes()) return false;
  if (is_generated(u, v) || is_rejected(u, v)) return false;
  return edge_mask(*this, u, v);
}

std::size_t MaskState::candidate_count() const {
  if (incremental_) {
    const std::size_t a = available_.size();
    return a * (a - (a > 0 ? 1 : 0)) / 2 - blocked_available_pairs_;
  }
  std::size_t count = 0;
  for (int u = 0; u < num_nodes(); ++u)
    for (int v = u + 1; v < num_nodes(); ++v) count += is_candidate(u, v) ? 1 : 0;
  return count;
}

std::vector<std::pair<int, int>> MaskState::candidate_pairs() const {
  std::vector<std::pair<int, int>> out;
  for (int u = 0; u < num_nodes(); ++u)
    for (int v = u + 1; v < num_nodes(); ++v)
      if (is_candidate(u, v)) out.emplace_back(u, v);
  return out;
}

void MaskState::block_pair(int u, int v) {
  blocked_adj_[u].push_back(v);
  blocked_adj_[v].push_back(u);
  if (available_pos_[u] >= 0 && available_pos_[v] >= 0) ++blocked_available_pairs_;
}

void MaskState::retire_node(int u) {
  const int pos = available_pos_[u];
  if (pos < 0) return;
  const int last = available_.back();
  available_[pos] = last;
  available_pos_[last] = pos;
  available_.pop_back();
  available_pos_[u] = -1;
  for (int w : blocked_adj_[u])
    if (available_pos_[w] >= 0) --blocked_available_pairs_;
}

void MaskState::commit(int u, int v, int order) {
  if (u == v || u < 0 || v < 0 || u >= num_nodes() || v >= num_nodes())
    throw std::logic_error("commit: invalid pair");
  if (is_generated(u, v)) throw std::logic_error("commit: pair already generated");
  if (is_rejected(u, v)) throw std::logic_error("commit: pair was rejected");
  if (!edge_mask(*this, u, v) || !weight_mask(*this, u, v, order))
    throw std::logic_error("commit: masked edge or bond order");

  generated_.insert(key(u, v));
  generated_list_.emplace_back(std::min(u, v), std::max(u, v));
  generated_adj_[u].push_back(v);
  generated_adj_[v].push_back(u);
  block_pair(u, v);
  for (int x : {u, v}) {
    remaining_[x] -= order;
    committed_[x] += order;
    if (valence_tracked_ && remaining_[x] < 0)
      throw std::logic_error("commit: negative remaining valence");
  }
  if (valence_tracked_)
    for (int x : {u, v})
      if (remaining_[x] < 1) retire_node(x);
}

void MaskState::reject(int u, int v) {
  if (is_generated(u, v)) throw std::logic_error("reject: pair already generated");
  if (is_rejected(u, v)) return;
  rejected_.insert(key(u, v));
  block_pair(u, v);
}

bool edge_mask(const MaskState& state, int u, int v) {
  for (const auto& p : state.providers())
    if (!p->edge_allowed(state, u, v)) return false;
  return true;
}

bool weight_mask(const MaskState& state, int u, int v, int order) {
  for (const auto& p : state.providers())
    if (!p->weight_allowed(state, u, v, order)) return false;
  return true;
}

void commit(MaskState& state, int u, int v, int order) { state.commit(u, v, order); }

}  // namespace nevae
