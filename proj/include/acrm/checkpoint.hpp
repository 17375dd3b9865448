#pragma once

// Checkpoint container: magic "ACRMCKPT", u32 LE version, u32 LE manifest
// byte length, UTF-8 JSON manifest (config, vocabulary, tensor directory with
// name/shape/byte-offset, optional optimizer state), then raw little-endian
// 32-bit float blobs, row-major. Write -> read -> write is byte-identical.

#include "acrm/adam.hpp"
#include "acrm/common.hpp"
#include "acrm/model.hpp"

#include <filesystem>
#include <optional>

namespace acrm {

void save_checkpoint(const std::filesystem::path& path, AcrmModel& model,
                     const AdamState* optimizer = nullptr);

struct LoadedCheckpoint {
  AcrmModel model;
  std::optional<AdamState> optimizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace acrm
