#pragma once

// Binary checkpoint container:
//   "NEVAECKP"  u32 version  u64 metadata length  metadata (JSON)
//   u32 tensor count, then per tensor:
//     u32 name length, name, u32 rank, u64 dims[rank], f64 data (row-major)
// Integers and floats are little-endian.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "nevae/model.h"
#include "nevae/training.h"

namespace nevae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Hyperparams hyper;
  std::size_t iteration = 0;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws InputError on a bad magic, version, metadata or tensor layout.
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nevae
