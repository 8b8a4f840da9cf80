#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mtdeblur/adam.hpp"
#include "mtdeblur/model.hpp"
#include "mtdeblur/trainer.hpp"

namespace mtdeblur {

/// File layout: "MTRNN1", u64 header length, JSON header (model config,
/// tensor table of name/shape/byte offset, training metadata), little-endian
/// float32 payload, u64 FNV-1a checksum of the payload.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  ModelParams<float> params;
  /// Empty moment vectors when no optimizer state is stored.
  AdamState<float> adam;
  std::int64_t step = 0;
  std::optional<TrainConfig> train;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws FormatError for bad magic, malformed or inconsistent headers and
/// truncated files, IntegrityError for payload checksum mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The JSON header of a checkpoint, pretty-printed.
std::string read_checkpoint_header(const std::filesystem::path& path);

}  // namespace mtdeblur
