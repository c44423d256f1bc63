#pragma once

#include <filesystem>
#include <string>

#include "mmtraj/config.hpp"
#include "mmtraj/params.hpp"

namespace mmtraj {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

// Layout: "MMTRJCK1", u32 version, u64 config-json length + json,
// u64 tensor count, then per tensor: u32 name length, name, u32 rank,
// u64 dims[rank], f64 data. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelConfig& config, const ModelParams& params);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmtraj
