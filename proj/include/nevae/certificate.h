#pragma once

#include <cstddef>
#include <string>

#include "nevae/molgraph.h"

namespace nevae {

inline constexpr std::size_t kDefaultCertificateLimit = 64;

/// Canonical byte string for a molecular graph: two graphs get the same
/// certificate iff they are isomorphic respecting atom types and bond orders.
///
/// Colour refinement seeded with (atom type, degree, incident bond orders)
/// runs to a stable partition; remaining ties are broken by exhaustive
/// individualization within the first non-singleton colour class, keeping the
/// lexicographically smallest adjacency code. Connected components are
/// canonicalized separately and their codes sorted. Interchangeable twin
/// atoms (same neighbour set) are branched on once.
///
/// Throws InputError when the graph has more than `max_nodes` atoms.
std::string canonical_certificate(const MolecularGraph& g,
                                  std::size_t max_nodes = kDefaultCertificateLimit);

}  // namespace nevae
