#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nevae {

enum class Atom : std::uint8_t { C = 0, H = 1, N = 2, O = 3 };
inline constexpr std::size_t kNumAtomTypes = 4;
inline constexpr int kMaxBondOrder = 3;

std::string_view atom_symbol(Atom a);
std::optional<Atom> parse_atom(std::string_view symbol);

struct Bond {
  int u = 0;
  int v = 0;
  int order = 1;
  friend bool operator==(const Bond&, const Bond&) = default;
  friend auto operator<=>(const Bond&, const Bond&) = default;
};

/// Undirected graph with atom-typed nodes and bond-order edges.
/// Bonds are stored with u < v; self-loops and duplicate pairs are rejected.
class MolecularGraph {
 public:
  MolecularGraph() = default;
  explicit MolecularGraph(std::vector<Atom> atoms);
  MolecularGraph(std::vector<Atom> atoms, std::span<const Bond> bonds);

  std::size_t size() const { return atoms_.size(); }
  std::size_t num_bonds() const { return bonds_.size(); }
  Atom atom(int u) const { return atoms_[u]; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  /// (neighbour, bond order) pairs in insertion order.
  const std::vector<std::pair<int, int>>& neighbors(int u) const { return adjacency_[u]; }
  int degree(int u) const { return static_cast<int>(adjacency_[u].size()); }
  /// Sum of incident bond orders.
  int bond_order_sum(int u) const;
  /// 0 when u and v are not bonded.
  int bond_order(int u, int v) const;

  /// Throws InputError on self-loops, duplicates, bad indices or bad orders.
  void add_bond(int u, int v, int order);

  /// Node u of this graph becomes node perm[u] of the result.
  MolecularGraph relabeled(std::span<const int> perm) const;

  /// Connected components as sorted node lists, ordered by smallest member.
  std::vector<std::vector<int>> components() const;

  /// Same atoms and the same bond set, regardless of bond insertion order.
  friend bool operator==(const MolecularGraph& a, const MolecularGraph& b);

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<std::pair<int, int>>> adjacency_;
};

/// Maximum total bond order per atom type.
struct ValenceTable {
  std::array<int, kNumAtomTypes> max_valence{4, 1, 3, 2};
  int operator()(Atom a) const { return max_valence[static_cast<std::size_t>(a)]; }
};

enum class Violation { kOverValence, kIsolated, kDisconnected, kEmpty };
std::string_view violation_name(Violation v);

struct ValidityReport {
  bool valid = true;
  std::vector<std::pair<int, Violation>> violations;
};

/// Valence-rule proxy for chemical validity: every atom within its maximum
/// valence (unused valence is taken as implicit hydrogens), at least one atom,
/// and a single connected component.
ValidityReport validate_molecule(const MolecularGraph& g, const ValenceTable& table = {});
bool is_valid_molecule(const MolecularGraph& g, const ValenceTable& table = {});
/// The valence rule alone: at least one atom and none over its maximum.
/// This is the property valence masks guarantee during decoding.
bool satisfies_valence(const MolecularGraph& g, const ValenceTable& table = {});

// ---- JSONL corpus I/O ------------------------------------------------------
// One molecule per line: {"atoms": ["C","O"], "bonds": [[0,1,2]]}

MolecularGraph parse_molecule(std::string_view json_line);
std::string serialize_molecule(const MolecularGraph& g);
/// Throws InputError naming the 1-based line number on any malformed record.
/// Blank lines are skipped.
std::vector<MolecularGraph> parse_corpus(std::istream& in);
std::vector<MolecularGraph> read_corpus_file(const std::string& path);
void write_corpus(std::ostream& out, std::span<const MolecularGraph> graphs);
void write_corpus_file(const std::string& path, std::span<const MolecularGraph> graphs);

/// Graphviz rendering: node label = atom symbol, edge label = bond order.
std::string to_dot(const MolecularGraph& g, std::string_view name = "molecule");

// ---- desk corpus -----------------------------------------------------------

/// Random hydrogen-saturated C/N/O molecule with at most `max_atoms` atoms
/// (hydrogens included). Heavy atoms form a random tree with an occasional
/// ring closure and multiple bonds where valence allows.
MolecularGraph random_molecule(std::mt19937_64& rng, int max_atoms);

/// `count` distinct (up to isomorphism) valid molecules of at most
/// `max_atoms` atoms each.
std::vector<MolecularGraph> generate_desk_corpus(std::size_t count, int max_atoms,
                                                 std::uint64_t seed);

}  // namespace nevae
