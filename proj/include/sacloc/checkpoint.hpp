#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "sacloc/model.hpp"
#include "sacloc/optim.hpp"

namespace sacloc {

// Binary checkpoint layout:
//   8 bytes magic "SACLOCCK", u32 format version, u64 header length,
//   UTF-8 JSON header (config, frame, parameter names/shapes, optimizer
//   scalars, epoch, caller metadata), then little-endian float64 blobs:
//   every parameter in GtModel::parameters() order, followed by the Adam
//   first and second moments when present.
inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'C', 'L', 'O', 'C', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GtModel model;
  ad::AdamState adam;
  std::size_t epochs_completed = 0;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws MissingArtifact if the file does not exist, BadCheckpoint on a
// wrong magic, version or truncated payload.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sacloc
