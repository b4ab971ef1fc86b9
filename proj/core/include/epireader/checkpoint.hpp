#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "epireader/model.hpp"

namespace epi {

// Versioned binary container: magic "EPIR", format version u32, config block
// (JSON), one named block per tensor (name length + name + rank + dims +
// little-endian f32 payload), vocabulary hash u64.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& config, std::uint64_t vocab_hash);

struct LoadedCheckpoint {
  ModelParams params;
  TrainConfig config;
  std::uint64_t vocab_hash = 0;
};

// Rejects wrong magic/version, truncation, unknown or missing tensors, and,
// when expected_vocab_hash is given, a vocabulary mismatch.
LoadedCheckpoint load_checkpoint(
    const std::string& path,
    std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

}  // namespace epi
