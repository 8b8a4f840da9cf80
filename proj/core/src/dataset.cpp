#include "mtdeblur/dataset.hpp"

#include <fstream>
#include <json.hpp>
#include <set>

#include "mtdeblur/hashing.hpp"

namespace mtdeblur {
namespace {

using nlohmann::json;

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  return buf;
}

Split split_of(const DatasetSpec& spec, int index, int& index_in_split) {
  if (index < spec.train_scenes) {
    index_in_split = index;
    return Split::kTrain;
  }
  if (index < spec.train_scenes + spec.val_scenes) {
    index_in_split = index - spec.train_scenes;
    return Split::kVal;
  }
  index_in_split = index - spec.train_scenes - spec.val_scenes;
  return Split::kTest;
}

json record_to_json(const SceneRecord& r) {
  json files = json::object(), sums = json::object();
  for (const auto& [tl, f] : r.files) files[std::to_string(tl)] = f;
  for (const auto& [tl, c] : r.checksums) sums[std::to_string(tl)] = c;
  return {{"scene_id", r.scene_id}, {"files", files},   {"checksums", sums},
          {"native_tl", r.native_tl}, {"split", to_string(r.split)}, {"seed", r.seed}};
}

SceneRecord record_from_json(const json& j) {
  SceneRecord r;
  r.scene_id = j.at("scene_id").get<std::string>();
  for (const auto& [k, v] : j.at("files").items()) r.files[std::stoi(k)] = v.get<std::string>();
  for (const auto& [k, v] : j.at("checksums").items()) r.checksums[std::stoi(k)] = v.get<std::string>();
  r.native_tl = j.at("native_tl").get<int>();
  r.split = parse_split(j.at("split").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw FormatError("unknown split '" + name + "'");
}

std::size_t DatasetManifest::count(Split split) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.split == split ? 1 : 0;
  return n;
}

Scene synthesize_scene(const DatasetSpec& spec, int index) {
  if (spec.native_tls.empty()) throw ConfigError("native_tls must not be empty");
  int within = 0;
  Scene scene;
  scene.record.scene_id = scene_name(index);
  scene.record.split = split_of(spec, index, within);
  scene.record.native_tl = spec.native_tls[static_cast<std::size_t>(within) % spec.native_tls.size()];
  scene.record.seed = derive_seed({spec.global_seed, static_cast<std::uint64_t>(index)});
  const FrameSequence seq = synth_sequence(spec.scene, scene.record.seed);
  scene.ladder = build_ladder(seq, scene.record.native_tl);
  for (auto& [tl, img] : scene.ladder.images) img = quantize16(img);
  return scene;
}

std::vector<Scene> synthesize_dataset(const DatasetSpec& spec) {
  if (spec.train_scenes < 0 || spec.val_scenes < 0 || spec.test_scenes < 0) {
    throw ConfigError("scene counts must be non-negative");
  }
  for (int tl : spec.native_tls) {
    if (tl < 7 || tl > kMaxTemporalLevel || tl % 2 == 0) {
      throw ConfigError("native temporal levels must be in {7, 9, 11, 13}");
    }
  }
  std::vector<Scene> scenes;
  const int total = spec.train_scenes + spec.val_scenes + spec.test_scenes;
  for (int i = 0; i < total; ++i) scenes.push_back(synthesize_scene(spec, i));
  return scenes;
}

Scene scene_from_frames(const FrameSequence& frames, const std::string& scene_id, int native_tl,
                        Split split) {
  Scene scene;
  scene.record.scene_id = scene_id;
  scene.record.native_tl = native_tl;
  scene.record.split = split;
  scene.record.seed = frames.seed;
  scene.ladder = build_ladder(frames, native_tl);
  for (auto& [tl, img] : scene.ladder.images) img = quantize16(img);
  return scene;
}

DatasetManifest write_dataset(const std::vector<Scene>& scenes, std::uint64_t global_seed,
                              const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  DatasetManifest manifest;
  manifest.global_seed = global_seed;
  std::set<std::string> ids;
  for (const auto& scene : scenes) {
    if (!ids.insert(scene.record.scene_id).second) {
      throw ArgumentError("duplicate scene id " + scene.record.scene_id);
    }
    SceneRecord record = scene.record;
    record.files.clear();
    record.checksums.clear();
    fs::create_directories(root / record.scene_id, ec);
    if (ec) throw IoError("cannot create scene directory: " + ec.message());
    for (const auto& [tl, img] : scene.ladder.images) {
      const std::string rel = record.scene_id + "/tl_" + std::to_string(tl) + ".png";
      write_png16(root / rel, img);
      record.files[tl] = rel;
      record.checksums[tl] = to_hex(file_checksum(root / rel));
    }
    manifest.records.push_back(std::move(record));
  }
  json records = json::array();
  for (const auto& r : manifest.records) records.push_back(record_to_json(r));
  json j = {{"format_version", manifest.format_version},
            {"global_seed", manifest.global_seed},
            {"records", records}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << j.dump(2) << '\n';
  return manifest;
}

DatasetManifest read_dataset(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("missing manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != DatasetManifest::kFormatVersion) {
      throw FormatError("manifest version " + std::to_string(m.format_version) + " is not supported");
    }
    m.global_seed = j.at("global_seed").get<std::uint64_t>();
    for (const auto& r : j.at("records")) m.records.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest " + path.string() + ": " + e.what());
  }

  std::map<std::string, Split> seen;
  for (const auto& r : m.records) {
    auto [it, inserted] = seen.emplace(r.scene_id, r.split);
    if (!inserted) {
      throw IntegrityError("scene " + r.scene_id + " listed twice (splits must be disjoint)");
    }
    if (!r.files.count(1) || !r.files.count(r.native_tl)) {
      throw IntegrityError("scene " + r.scene_id + " lacks its sharp or native temporal level");
    }
    for (const auto& [tl, rel] : r.files) {
      const auto file = root / rel;
      if (!std::filesystem::exists(file)) throw IntegrityError("missing file " + file.string());
      auto sum = r.checksums.find(tl);
      if (sum == r.checksums.end() || sum->second != to_hex(file_checksum(file))) {
        throw IntegrityError("checksum mismatch for " + file.string());
      }
    }
  }
  return m;
}

TemporalLadder load_ladder(const std::filesystem::path& root, const SceneRecord& record) {
  TemporalLadder ladder;
  ladder.native_tl = record.native_tl;
  for (const auto& [tl, rel] : record.files) ladder.images[tl] = read_png(root / rel);
  return ladder;
}

std::vector<Scene> load_split(const std::filesystem::path& root, const DatasetManifest& manifest,
                              Split split) {
  std::vector<Scene> out;
  for (const auto& r : manifest.records) {
    if (r.split == split) out.push_back({r, load_ladder(root, r)});
  }
  return out;
}

}  // namespace mtdeblur
