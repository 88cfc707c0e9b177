#pragma once

#include "fieldslam/adam.hpp"
#include "fieldslam/param_store.hpp"

#include <cstdint>
#include <filesystem>

namespace fieldslam {

// Checkpoint layout (all little-endian):
//   bytes 0-7   magic "FSLMCKPT"
//   u32         version (1)
//   u32         reserved (0)
//   u64         config hash (canonical config echo, FNV-1a)
//   i64         n  (parameter count)
//   i64         adam step count
//   f64 * n     parameter values
//   f64 * n     adam first moments
//   f64 * n     adam second moments
// The parameter layout itself is reproduced by rebuilding the scene from the
// hashed config, which is why the hash is checked on load.
void save_checkpoint(const std::filesystem::path& path, uint64_t config_hash,
                     const ParamStore& store, const AdamState& adam);

// Verifies magic, version, size and (unless ignore_hash) the config hash.
void load_checkpoint(const std::filesystem::path& path, uint64_t config_hash, ParamStore& store,
                     AdamState& adam, bool ignore_hash = false);

}  // namespace fieldslam
