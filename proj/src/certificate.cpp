#include "nevae/certificate.h"

#include <algorithm>
#include <map>
#include <tuple>
#include <vector>

#include "nevae/error.h"

namespace nevae {

namespace {

struct Component {
  std::vector<Atom> atoms;
  // adjacency[u] = sorted (neighbour, order)
  std::vector<std::vector<std::pair<int, int>>> adjacency;
  std::vector<int> order_matrix;  // n*n bond orders
  int n = 0;
};

Component extract(const MolecularGraph& g, const std::vector<int>& members) {
  Component c;
  c.n = static_cast<int>(members.size());
  std::map<int, int> local;
  for (int i = 0; i < c.n; ++i) local[members[i]] = i;
  c.adjacency.resize(c.n);
  c.order_matrix.assign(static_cast<std::size_t>(c.n) * c.n, 0);
  for (int i = 0; i < c.n; ++i) {
    c.atoms.push_back(g.atom(members[i]));
    for (const auto& [v, order] : g.neighbors(members[i])) {
      const int j = local.at(v);
      c.adjacency[i].emplace_back(j, order);
      c.order_matrix[static_cast<std::size_t>(i) * c.n + j] = order;
    }
    std::sort(c.adjacency[i].begin(), c.adjacency[i].end());
  }
  return c;
}

using Colors = std::vector<int>;

// Replaces each colour by the rank of its signature among all signatures.
template <typename Sig>
int rank_signatures(const std::vector<Sig>& sigs, Colors& colors) {
  std::vector<Sig> uniq = sigs;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (std::size_t v = 0; v < sigs.size(); ++v)
    colors[v] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), sigs[v]) - uniq.begin());
  return static_cast<int>(uniq.size());
}

int count_colors(const Colors& colors) {
  Colors c = colors;
  std::sort(c.begin(), c.end());
  return static_cast<int>(std::unique(c.begin(), c.end()) - c.begin());
}

void refine(const Component& comp, Colors& colors) {
  int classes = count_colors(colors);
  using Sig = std::pair<int, std::vector<std::pair<int, int>>>;
  std::vector<Sig> sigs(comp.n);
  for (;;) {
    for (int v = 0; v < comp.n; ++v) {
      sigs[v].first = colors[v];
      auto& nb = sigs[v].second;
      nb.clear();
      for (const auto& [w, order] : comp.adjacency[v]) nb.emplace_back(order, colors[w]);
      std::sort(nb.begin(), nb.end());
    }
    const int next = rank_signatures(sigs, colors);
    if (next == classes) return;
    classes = next;
  }
}

std::string leaf_code(const Component& comp, const Colors& colors) {
  std::vector<int> order(comp.n);
  for (int v = 0; v < comp.n; ++v) order[colors[v]] = v;
  std::string code;
  code.reserve(comp.n + static_cast<std::size_t>(comp.n) * (comp.n - 1) / 2);
  for (int v : order) code.push_back(static_cast<char>('a' + static_cast<int>(comp.atoms[v])));
  for (int i = 0; i < comp.n; ++i)
    for (int j = i + 1; j < comp.n; ++j)
      code.push_back(static_cast<char>(
          '0' + comp.order_matrix[static_cast<std::size_t>(order[i]) * comp.n + order[j]]));
  return code;
}

void search(const Component& comp, Colors colors, std::string& best) {
  refine(comp, colors);
  const int classes = count_colors(colors);
  if (classes == comp.n) {
    std::string code = leaf_code(comp, colors);
    if (best.empty() || code < best) best = std::move(code);
    return;
  }
  // First non-singleton class in colour order.
  std::vector<int> size(comp.n, 0);
  for (int c : colors) ++size[c];
  int target = 0;
  while (size[target] < 2) ++target;

  std::vector<const std::vector<std::pair<int, int>>*> seen_neighborhoods;
  for (int v = 0; v < comp.n; ++v) {
    if (colors[v] != target) continue;
    const auto* nb = &comp.adjacency[v];
    const bool twin = std::any_of(seen_neighborhoods.begin(), seen_neighborhoods.end(),
                                  [nb](const auto* other) { return *other == *nb; });
    if (twin) continue;
    seen_neighborhoods.push_back(nb);
    Colors next(comp.n);
    for (int w = 0; w < comp.n; ++w) next[w] = 2 * colors[w] + (w == v ? 0 : 1);
    search(comp, std::move(next), best);
  }
}

std::string component_certificate(const Component& comp) {
  using Seed = std::tuple<int, int, std::vector<int>>;
  std::vector<Seed> seeds(comp.n);
  for (int v = 0; v < comp.n; ++v) {
    std::vector<int> orders;
    for (const auto& [w, order] : comp.adjacency[v]) orders.push_back(order);
    std::sort(orders.begin(), orders.end());
    seeds[v] = {static_cast<int>(comp.atoms[v]), static_cast<int>(comp.adjacency[v].size()),
                std::move(orders)};
  }
  Colors colors(comp.n);
  rank_signatures(seeds, colors);
  std::string best;
  search(comp, std::move(colors), best);
  return std::to_string(comp.n) + ":" + best;
}

}  // namespace

std::string canonical_certificate(const MolecularGraph& g, std::size_t max_nodes) {
  if (g.size() > max_nodes)
    throw InputError("canonical_certificate: " + std::to_string(g.size()) +
                     " atoms exceeds limit " + std::to_string(max_nodes));
  std::vector<std::string> parts;
  for (const auto& members : g.components()) parts.push_back(component_certificate(extract(g, members)));
  std::sort(parts.begin(), parts.end());
  std::string out = std::to_string(g.size()) + "|";
  for (const auto& p : parts) out += p + "|";
  return out;
}

}  // namespace nevae
