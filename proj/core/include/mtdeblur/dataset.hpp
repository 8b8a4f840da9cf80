#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtdeblur/blur.hpp"

namespace mtdeblur {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct SceneRecord {
  std::string scene_id;
  /// Temporal level -> image path relative to the dataset root.
  std::map<int, std::string> files;
  /// Temporal level -> FNV-1a 64 checksum of the file, hex encoded.
  std::map<int, std::string> checksums;
  int native_tl = 0;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::uint64_t global_seed = 0;
  std::vector<SceneRecord> records;

  std::size_t count(Split split) const;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Scene {
  SceneRecord record;
  TemporalLadder ladder;
};

struct DatasetSpec {
  SceneConfig scene;
  int train_scenes = 40;
  int val_scenes = 8;
  int test_scenes = 16;
  /// Native temporal levels, assigned round-robin within each split.
  std::vector<int> native_tls{7, 9, 11, 13};
  std::uint64_t global_seed = 0;
};

/// Synthesizes every scene of the spec. Ladders are quantized to 16-bit
/// levels so that in-memory scenes equal what write_dataset stores.
/// Each scene depends only on (global_seed, scene index).
std::vector<Scene> synthesize_dataset(const DatasetSpec& spec);
Scene synthesize_scene(const DatasetSpec& spec, int index);

/// Scene built from user frames (ingest mode).
Scene scene_from_frames(const FrameSequence& frames, const std::string& scene_id, int native_tl,
                        Split split);

/// Writes `<root>/<scene_id>/tl_<k>.png` (16-bit RGB) plus manifest.json.
DatasetManifest write_dataset(const std::vector<Scene>& scenes, std::uint64_t global_seed,
                              const std::filesystem::path& root);

/// Reads and validates manifest.json: version, files present, checksums,
/// splits disjoint by scene id.
DatasetManifest read_dataset(const std::filesystem::path& root);

TemporalLadder load_ladder(const std::filesystem::path& root, const SceneRecord& record);
std::vector<Scene> load_split(const std::filesystem::path& root, const DatasetManifest& manifest,
                              Split split);

}  // namespace mtdeblur
