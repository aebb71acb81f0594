#pragma once

#include <functional>
#include <string>

#include "nevae/molgraph.h"

namespace nevae {

/// Deterministic score of a valid molecule; higher is better.
struct PropertyOracle {
  std::string name;
  std::function<double(const MolecularGraph&)> score;
};

/// Lengths of a minimum cycle basis (Horton candidates, GF(2) elimination).
std::vector<std::size_t> minimum_cycle_basis_lengths(const MolecularGraph& g);

/// mean degree - 0.5 * (# basis cycles longer than 6) - 0.1 * |n - lambda_n|.
/// Throws InputError for an invalid molecule.
double proxy_property(const MolecularGraph& g, double lambda_n, const ValenceTable& table = {});

PropertyOracle make_proxy_oracle(double lambda_n);

}  // namespace nevae
