#include "nevae/property.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "nevae/error.h"

namespace nevae {

namespace {

using EdgeSet = std::vector<std::uint64_t>;  // bitset over edge ids

struct Candidate {
  std::size_t length;
  EdgeSet edges;
};

}  // namespace

std::vector<std::size_t> minimum_cycle_basis_lengths(const MolecularGraph& g) {
  const int n = static_cast<int>(g.size());
  const auto& bonds = g.bonds();
  const std::size_t m = bonds.size();
  const std::size_t rank = m + g.components().size() - static_cast<std::size_t>(n);
  if (rank == 0) return {};

  std::vector<std::vector<int>> edge_id(n, std::vector<int>(n, -1));
  for (std::size_t e = 0; e < m; ++e) edge_id[bonds[e].u][bonds[e].v] = edge_id[bonds[e].v][bonds[e].u] = static_cast<int>(e);
  const std::size_t words = (m + 63) / 64;

  std::vector<Candidate> candidates;
  for (int root = 0; root < n; ++root) {
    std::vector<int> parent(n, -1), depth(n, -1);
    std::deque<int> queue{root};
    depth[root] = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (auto [v, order] : g.neighbors(u))
        if (depth[v] < 0) {
          depth[v] = depth[u] + 1;
          parent[v] = u;
          queue.push_back(v);
        }
    }
    for (const Bond& b : bonds) {
      if (depth[b.u] < 0 || parent[b.u] == b.v || parent[b.v] == b.u) continue;
      EdgeSet set(words, 0);
      std::vector<char> on_path(n, 0);
      bool simple = true;
      std::size_t length = 1;
      set[edge_id[b.u][b.v] / 64] ^= 1ULL << (edge_id[b.u][b.v] % 64);
      for (int start : {b.u, b.v})
        for (int x = start; x != root; x = parent[x]) {
          const int e = edge_id[x][parent[x]];
          if (set[e / 64] >> (e % 64) & 1ULL) simple = false;
          set[e / 64] ^= 1ULL << (e % 64);
          ++length;
          if (on_path[x]) simple = false;
          on_path[x] = 1;
        }
      if (simple) candidates.push_back({length, std::move(set)});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.length < b.length; });

  // Greedy independence test by Gaussian elimination over GF(2).
  std::vector<EdgeSet> basis;
  std::vector<std::size_t> pivots;
  std::vector<std::size_t> lengths;
  for (const Candidate& c : candidates) {
    EdgeSet v = c.edges;
    for (std::size_t i = 0; i < basis.size(); ++i)
      if (v[pivots[i] / 64] >> (pivots[i] % 64) & 1ULL)
        for (std::size_t w = 0; w < words; ++w) v[w] ^= basis[i][w];
    std::size_t pivot = m;
    for (std::size_t e = 0; e < m; ++e)
      if (v[e / 64] >> (e % 64) & 1ULL) {
        pivot = e;
        break;
      }
    if (pivot == m) continue;
    // Keep the reduced basis in echelon form: clear the new pivot elsewhere.
    for (std::size_t i = 0; i < basis.size(); ++i)
      if (basis[i][pivot / 64] >> (pivot % 64) & 1ULL)
        for (std::size_t w = 0; w < words; ++w) basis[i][w] ^= v[w];
    basis.push_back(std::move(v));
    pivots.push_back(pivot);
    lengths.push_back(c.length);
    if (basis.size() == rank) break;
  }
  return lengths;
}

double proxy_property(const MolecularGraph& g, double lambda_n, const ValenceTable& table) {
  if (!is_valid_molecule(g, table)) throw InputError("proxy property is undefined for an invalid molecule");
  const double n = static_cast<double>(g.size());
  const double mean_degree = 2.0 * static_cast<double>(g.num_bonds()) / n;
  std::size_t long_cycles = 0;
  for (std::size_t len : minimum_cycle_basis_lengths(g)) long_cycles += len > 6 ? 1 : 0;
  return mean_degree - 0.5 * static_cast<double>(long_cycles) - 0.1 * std::abs(n - lambda_n);
}

PropertyOracle make_proxy_oracle(double lambda_n) {
  return {"proxy", [lambda_n](const MolecularGraph& g) { return proxy_property(g, lambda_n); }};
}

}  // namespace nevae
