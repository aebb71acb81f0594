#include "nevae/molgraph.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "nevae/certificate.h"
#include "nevae/error.h"

namespace nevae {

std::string_view atom_symbol(Atom a) {
  switch (a) {
    case Atom::C: return "C";
    case Atom::H: return "H";
    case Atom::N: return "N";
    case Atom::O: return "O";
  }
  return "?";
}

std::optional<Atom> parse_atom(std::string_view symbol) {
  if (symbol == "C") return Atom::C;
  if (symbol == "H") return Atom::H;
  if (symbol == "N") return Atom::N;
  if (symbol == "O") return Atom::O;
  return std::nullopt;
}

// ---- MolecularGraph ----------------------------------------------------------

MolecularGraph::MolecularGraph(std::vector<Atom> atoms)
    : atoms_(std::move(atoms)), adjacency_(atoms_.size()) {}

MolecularGraph::MolecularGraph(std::vector<Atom> atoms, std::span<const Bond> bonds)
    : MolecularGraph(std::move(atoms)) {
  for (const Bond& b : bonds) add_bond(b.u, b.v, b.order);
}

void MolecularGraph::add_bond(int u, int v, int order) {
  const int n = static_cast<int>(size());
  if (u < 0 || v < 0 || u >= n || v >= n)
    throw InputError("bond (" + std::to_string(u) + ", " + std::to_string(v) +
                     ") out of range for " + std::to_string(n) + " atoms");
  if (u == v) throw InputError("self-loop at atom " + std::to_string(u));
  if (order < 1 || order > kMaxBondOrder)
    throw InputError("bond order " + std::to_string(order) + " not in {1,2,3}");
  if (bond_order(u, v) != 0)
    throw InputError("duplicate bond (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  if (u > v) std::swap(u, v);
  bonds_.push_back({u, v, order});
  adjacency_[u].emplace_back(v, order);
  adjacency_[v].emplace_back(u, order);
}

int MolecularGraph::bond_order_sum(int u) const {
  int s = 0;
  for (const auto& [v, order] : adjacency_[u]) s += order;
  return s;
}

int MolecularGraph::bond_order(int u, int v) const {
  for (const auto& [w, order] : adjacency_[u])
    if (w == v) return order;
  return 0;
}

MolecularGraph MolecularGraph::relabeled(std::span<const int> perm) const {
  if (perm.size() != size()) throw InputError("relabeled: permutation has wrong length");
  std::vector<Atom> atoms(size());
  for (std::size_t u = 0; u < size(); ++u) atoms[perm[u]] = atoms_[u];
  MolecularGraph out(std::move(atoms));
  for (const Bond& b : bonds_) out.add_bond(perm[b.u], perm[b.v], b.order);
  return out;
}

std::vector<std::vector<int>> MolecularGraph::components() const {
  const int n = static_cast<int>(size());
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> members{s};
    comp[s] = static_cast<int>(out.size());
    for (std::size_t i = 0; i < members.size(); ++i)
      for (const auto& [v, order] : adjacency_[members[i]])
        if (comp[v] < 0) {
          comp[v] = comp[s];
          members.push_back(v);
        }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

bool operator==(const MolecularGraph& a, const MolecularGraph& b) {
  if (a.atoms_ != b.atoms_) return false;
  auto x = a.bonds_;
  auto y = b.bonds_;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return x == y;
}

// ---- validity --------------------------------------------------------------

std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::kOverValence: return "over-valence";
    case Violation::kIsolated: return "isolated";
    case Violation::kDisconnected: return "disconnected";
    case Violation::kEmpty: return "empty";
  }
  return "?";
}

ValidityReport validate_molecule(const MolecularGraph& g, const ValenceTable& table) {
  ValidityReport report;
  const int n = static_cast<int>(g.size());
  if (n == 0) report.violations.emplace_back(-1, Violation::kEmpty);
  for (int u = 0; u < n; ++u) {
    if (g.bond_order_sum(u) > table(g.atom(u)))
      report.violations.emplace_back(u, Violation::kOverValence);
    if (n > 1 && g.degree(u) == 0) report.violations.emplace_back(u, Violation::kIsolated);
  }
  if (n > 1) {
    const auto comps = g.components();
    for (std::size_t c = 1; c < comps.size(); ++c)
      report.violations.emplace_back(comps[c].front(), Violation::kDisconnected);
  }
  report.valid = report.violations.empty();
  return report;
}

bool is_valid_molecule(const MolecularGraph& g, const ValenceTable& table) {
  return validate_molecule(g, table).valid;
}

bool satisfies_valence(const MolecularGraph& g, const ValenceTable& table) {
  if (g.size() == 0) return false;
  for (int u = 0; u < static_cast<int>(g.size()); ++u)
    if (g.bond_order_sum(u) > table(g.atom(u))) return false;
  return true;
}

// ---- JSONL -----------------------------------------------------------------

namespace {

MolecularGraph molecule_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("atoms") || !j.contains("bonds"))
    throw InputError("record must be an object with \"atoms\" and \"bonds\"");
  const auto& atoms_j = j.at("atoms");
  const auto& bonds_j = j.at("bonds");
  if (!atoms_j.is_array() || !bonds_j.is_array())
    throw InputError("\"atoms\" and \"bonds\" must be arrays");
  std::vector<Atom> atoms;
  for (const auto& a : atoms_j) {
    if (!a.is_string()) throw InputError("atom symbols must be strings");
    const auto sym = a.get<std::string>();
    const auto atom = parse_atom(sym);
    if (!atom) throw InputError("unknown atom symbol \"" + sym + "\"");
    atoms.push_back(*atom);
  }
  MolecularGraph g(std::move(atoms));
  for (const auto& b : bonds_j) {
    if (!b.is_array() || b.size() != 3 || !b[0].is_number_integer() ||
        !b[1].is_number_integer() || !b[2].is_number_integer())
      throw InputError("bond must be [u, v, order] with integer entries");
    g.add_bond(b[0].get<int>(), b[1].get<int>(), b[2].get<int>());
  }
  return g;
}

nlohmann::json molecule_to_json(const MolecularGraph& g) {
  nlohmann::json atoms = nlohmann::json::array();
  for (Atom a : g.atoms()) atoms.push_back(std::string(atom_symbol(a)));
  nlohmann::json bonds = nlohmann::json::array();
  for (const Bond& b : g.bonds()) bonds.push_back({b.u, b.v, b.order});
  return {{"atoms", atoms}, {"bonds", bonds}};
}

}  // namespace

MolecularGraph parse_molecule(std::string_view json_line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
  return molecule_from_json(j);
}

std::string serialize_molecule(const MolecularGraph& g) { return molecule_to_json(g).dump(); }

std::vector<MolecularGraph> parse_corpus(std::istream& in) {
  std::vector<MolecularGraph> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    try {
      out.push_back(parse_molecule(line));
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<MolecularGraph> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus file " + path);
  try {
    return parse_corpus(in);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_corpus(std::ostream& out, std::span<const MolecularGraph> graphs) {
  for (const auto& g : graphs) out << serialize_molecule(g) << '\n';
}

void write_corpus_file(const std::string& path, std::span<const MolecularGraph> graphs) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_corpus(out, graphs);
}

std::string to_dot(const MolecularGraph& g, std::string_view name) {
  std::ostringstream os;
  os << "graph \"" << name << "\" {\n";
  for (std::size_t u = 0; u < g.size(); ++u)
    os << "  " << u << " [label=\"" << atom_symbol(g.atom(static_cast<int>(u))) << "\"];\n";
  for (const Bond& b : g.bonds())
    os << "  " << b.u << " -- " << b.v << " [label=\"" << b.order << "\"];\n";
  os << "}\n";
  return os.str();
}

// ---- desk corpus -------------------------------------------------------------

MolecularGraph random_molecule(std::mt19937_64& rng, int max_atoms) {
  if (max_atoms < 3) throw InputError("random_molecule: max_atoms must be at least 3");
  const ValenceTable table;
  std::discrete_distribution<int> pick_type({6.0, 0.0, 2.0, 2.0});
  std::bernoulli_distribution coin_ring(0.3), coin_upgrade(0.25);
  for (;;) {
    const int heavy = std::uniform_int_distribution<int>(1, std::min(6, max_atoms / 2))(rng);
    std::vector<Atom> atoms;
    for (int i = 0; i < heavy; ++i) atoms.push_back(static_cast<Atom>(pick_type(rng)));
    MolecularGraph g(atoms);
    auto room = [&](int u) { return table(g.atom(u)) - g.bond_order_sum(u); };

    bool ok = true;
    for (int i = 1; i < heavy && ok; ++i) {
      std::vector<int> open;
      for (int j = 0; j < i; ++j)
        if (room(j) >= 1) open.push_back(j);
      if (open.empty()) {
        ok = false;
        break;
      }
      const int j = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
      g.add_bond(j, i, 1);
    }
    if (!ok) continue;

    if (heavy >= 3 && coin_ring(rng)) {
      std::vector<std::pair<int, int>> pairs;
      for (int u = 0; u < heavy; ++u)
        for (int v = u + 1; v < heavy; ++v)
          if (g.bond_order(u, v) == 0 && room(u) >= 1 && room(v) >= 1) pairs.emplace_back(u, v);
      if (!pairs.empty()) {
        const auto [u, v] = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
        g.add_bond(u, v, 1);
      }
    }

    // Raise some bond orders where both ends still have room.
    std::vector<Bond> bonds = g.bonds();
    std::shuffle(bonds.begin(), bonds.end(), rng);
    std::vector<Bond> raised;
    {
      std::vector<int> used(heavy, 0);
      for (const Bond& b : bonds) {
        used[b.u] += b.order;
        used[b.v] += b.order;
      }
      for (Bond b : bonds) {
        while (b.order < kMaxBondOrder && coin_upgrade(rng) && used[b.u] < table(atoms[b.u]) &&
               used[b.v] < table(atoms[b.v])) {
          ++b.order;
          ++used[b.u];
          ++used[b.v];
        }
        raised.push_back(b);
      }
    }
    MolecularGraph heavy_graph(atoms, raised);

    int total = heavy;
    for (int u = 0; u < heavy; ++u) total += table(atoms[u]) - heavy_graph.bond_order_sum(u);
    if (total > max_atoms) continue;

    std::vector<Atom> all_atoms = atoms;
    all_atoms.resize(total, Atom::H);
    MolecularGraph mol(all_atoms, heavy_graph.bonds());
    int next = heavy;
    for (int u = 0; u < heavy; ++u) {
      const int missing = table(atoms[u]) - heavy_graph.bond_order_sum(u);
      for (int k = 0; k < missing; ++k) mol.add_bond(u, next++, 1);
    }
    return mol;
  }
}

std::vector<MolecularGraph> generate_desk_corpus(std::size_t count, int max_atoms,
                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MolecularGraph> out;
  std::unordered_set<std::string> seen;
  const std::size_t max_attempts = 200 * count + 1000;
  for (std::size_t attempt = 0; out.size() < count; ++attempt) {
    if (attempt >= max_attempts)
      throw Error("generate_desk_corpus: could only find " + std::to_string(out.size()) +
                  " distinct molecules with at most " + std::to_string(max_atoms) + " atoms");
    MolecularGraph g = random_molecule(rng, max_atoms);
    // Shuffle node labels so hydrogens are not always listed last.
    std::vector<int> perm(g.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    g = g.relabeled(perm);
    if (seen.insert(canonical_certificate(g)).second) out.push_back(std::move(g));
  }
  return out;
}

}  // namespace nevae
