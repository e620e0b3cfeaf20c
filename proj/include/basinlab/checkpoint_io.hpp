#pragma once

// Checkpoint file layout:
//
//   <canonical JSON header, one line>\n
//   "LSCHKPT1"                      8 bytes
//   parameter count                 uint64, little-endian
//   parameters                      count x float64, little-endian
//
// The header carries the format version, config hash, model spec, optimizer
// label, epoch, master seed, parameter count, layout table and batch-norm
// running statistics.

#include <filesystem>
#include <iosfwd>

#include "basinlab/training.hpp"

namespace basinlab {

inline constexpr char kCheckpointMagic[8] = {'L', 'S', 'C', 'H', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws FormatError on a bad magic or length and IncompatibleError when the
/// stored hash disagrees with the stored spec or with `expected`. Nothing is
/// returned unless the whole file validates.
Checkpoint read_checkpoint(std::istream& in, const ModelSpec* expected = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelSpec* expected = nullptr);

}  // namespace basinlab
