#pragma once

// Binary masks for sequential decoding.
//
// A MaskState carries the per-decode bookkeeping (committed valence, the
// generated edge set, rejected pairs); MaskProviders are stateless rules that
// read it. Several providers compose by conjunction.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nevae/molgraph.h"

namespace nevae {

class MaskState;

class MaskProvider {
 public:
  virtual ~MaskProvider() = default;
  virtual std::string_view name() const = 0;
  virtual bool edge_allowed(const MaskState& state, int u, int v) const = 0;
  virtual bool weight_allowed(const MaskState& state, int u, int v, int order) const = 0;
};

/// Both endpoints need at least one unit of free valence for an edge, and
/// `order` units for a bond of that order.
class ValenceMask final : public MaskProvider {
 public:
  std::string_view name() const override { return "valence"; }
  bool edge_allowed(const MaskState& state, int u, int v) const override;
  bool weight_allowed(const MaskState& state, int u, int v, int order) const override;
};

/// Forbids any edge that would close a triangle with generated edges.
class TriangleFreeMask final : public MaskProvider {
 public:
  std::string_view name() const override { return "triangle-free"; }
  bool edge_allowed(const MaskState& state, int u, int v) const override;
  bool weight_allowed(const MaskState&, int, int, int) const override { return true; }
};

struct MaskConfig {
  bool valence = false;
  bool triangle_free = false;
  ValenceTable table;

  static MaskConfig none() { return {}; }
  static MaskConfig valence_only() { return {true, false, {}}; }
  static MaskConfig triangle_free_only() { return {false, true, {}}; }
};

/// Accepts "none", "valence", "triangle-free" or a comma-separated
/// combination. Throws InputError otherwise.
MaskConfig parse_mask_config(std::string_view text);
std::string mask_config_name(const MaskConfig& config);

class MaskState {
 public:
  MaskState(const std::vector<Atom>& atoms, const MaskConfig& config);
  MaskState(const std::vector<Atom>& atoms, const ValenceTable& table,
            std::vector<std::shared_ptr<const MaskProvider>> providers);

  int num_nodes() const { return static_cast<int>(remaining_.size()); }
  /// m_max(u) minus the committed bond-order sum n_k(u).
  int remaining_valence(int u) const { return remaining_[u]; }
  int committed_valence(int u) const { return committed_[u]; }
  bool is_generated(int u, int v) const { return generated_.contains(key(u, v)); }
  bool is_rejected(int u, int v) const { return rejected_.contains(key(u, v)); }
  const std::vector<std::pair<int, int>>& generated_edges() const { return generated_list_; }
  const std::vector<int>& generated_neighbors(int u) const { return generated_adj_[u]; }
  const std::vector<std::shared_ptr<const MaskProvider>>& providers() const { return providers_; }

  /// True when the candidate count and uniform candidate draws can use the
  /// incremental bookkeeping (no providers beyond valence).
  bool counts_incrementally() const { return incremental_; }
  /// Nodes still able to take an edge under the incremental rules.
  const std::vector<int>& available_nodes() const { return available_; }

  /// Pairs not generated, not rejected, u != v, and allowed by every provider.
  bool is_candidate(int u, int v) const;
  std::size_t candidate_count() const;
  std::vector<std::pair<int, int>> candidate_pairs() const;

  void commit(int u, int v, int order);
  void reject(int u, int v);

 private:
  std::uint64_t key(int u, int v) const {
    if (u > v) std::swap(u, v);
    return static_cast<std::uint64_t>(u) * remaining_.size() + static_cast<std::uint64_t>(v);
  }
  bool node_available(int u) const { return !valence_tracked_ || remaining_[u] >= 1; }
  void block_pair(int u, int v);
  void retire_node(int u);

  std::vector<int> remaining_;
  std::vector<int> committed_;
  std::unordered_set<std::uint64_t> generated_;
  std::unordered_set<std::uint64_t> rejected_;
  std::vector<std::pair<int, int>> generated_list_;
  std::vector<std::vector<int>> generated_adj_;
  std::vector<std::vector<int>> blocked_adj_;
  std::vector<std::shared_ptr<const MaskProvider>> providers_;

  bool incremental_ = true;
  bool valence_tracked_ = false;
  std::vector<int> available_;
  std::vector<int> available_pos_;
  std::size_t blocked_available_pairs_ = 0;
};

bool edge_mask(const MaskState& state, int u, int v);
bool weight_mask(const MaskState& state, int u, int v, int order);
/// Adds (u, v) with `order`. Throws std::logic_error if the pair is already
/// generated or a mask forbids it.
void commit(MaskState& state, int u, int v, int order);

}  // namespace nevae
