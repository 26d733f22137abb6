#pragma once

#include <cstdint>
#include <filesystem>

#include "eit/config.hpp"
#include "eit/params.hpp"

namespace eit {

// On-disk layout:
//   "EITCKPT1"                    8 bytes
//   header length                 u64 little-endian
//   header                        JSON: {"config", "config_hash", "tensors":
//                                   {name: {"shape", "dtype", "offset"}}}
//   payloads                      raw little-endian values in header order;
//                                 offsets are relative to the payload start
inline constexpr char kCheckpointMagic[8] = {'E', 'I', 'T', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params, DType dtype = DType::kF64);

// Validates the magic, the stored config hash and every tensor shape against
// the config. Throws IoError for malformed files, ConfigError for mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace eit
