#include "mtdeblur/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "mtdeblur/error.hpp"
#include "mtdeblur/hashing.hpp"

namespace mtdeblur {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and must be little-endian");

using nlohmann::json;

constexpr char kMagic[] = {'M', 'T', 'R', 'N', 'N', '1'};
constexpr std::size_t kMagicSize = sizeof(kMagic);

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Parsed {
  json header;
  std::string_view payload;
};

Parsed parse(const std::string& bytes, const std::filesystem::path& path) {
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < kMagicSize + 8 || std::memcmp(bytes.data(), kMagic, kMagicSize) != 0) {
    throw FormatError(where + ": missing MTRNN1 magic");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + kMagicSize);
  const std::size_t header_at = kMagicSize + 8;
  if (header_len > bytes.size() - header_at) throw FormatError(where + ": truncated header");
  Parsed p;
  try {
    p.header = json::parse(bytes.substr(header_at, header_len));
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed header: " + e.what());
  }
  const std::size_t payload_at = header_at + header_len;
  std::uint64_t payload_bytes = 0;
  try {
    if (p.header.at("format_version").get<int>() != Checkpoint::kFormatVersion) {
      throw FormatError(where + ": unsupported format version " +
                        p.header.at("format_version").dump());
    }
    payload_bytes = p.header.at("payload_bytes").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": incomplete header: " + e.what());
  }
  if (bytes.size() < payload_at || bytes.size() - payload_at < payload_bytes + 8) {
    throw FormatError(where + ": truncated payload");
  }
  if (bytes.size() - payload_at != payload_bytes + 8) {
    throw FormatError(where + ": trailing bytes after checksum");
  }
  p.payload = std::string_view(bytes).substr(payload_at, payload_bytes);
  const std::uint64_t stored = get_u64(bytes.data() + payload_at + payload_bytes);
  const std::uint64_t actual = fnv1a64(std::as_bytes(std::span(p.payload.data(), p.payload.size())));
  if (stored != actual) throw IntegrityError(where + ": payload checksum mismatch");
  return p;
}

json model_json(const ModelConfig& m) {
  return {{"base_channels", m.base_channels},
          {"resblocks_per_stage", m.resblocks_per_stage},
          {"kernel_size", m.kernel_size},
          {"in_channels", m.in_channels},
          {"width_multiplier", m.width_multiplier}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.base_channels = j.at("base_channels").get<int>();
  m.resblocks_per_stage = j.at("resblocks_per_stage").get<int>();
  m.kernel_size = j.at("kernel_size").get<int>();
  m.in_channels = j.at("in_channels").get<int>();
  m.width_multiplier = j.at("width_multiplier").get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto& tensors = ckpt.params.tensors;
  const bool with_adam = !ckpt.adam.first_moment.empty();
  if (with_adam && (ckpt.adam.first_moment.size() != tensors.size() ||
                    ckpt.adam.second_moment.size() != tensors.size())) {
    throw ArgumentError("optimizer state does not match the parameters");
  }

  std::string payload;
  json table = json::array();
  auto append = [&](const std::string& group, const std::string& name, const TensorF& t) {
    table.push_back({{"group", group},
                     {"name", name},
                     {"shape", t.shape().dims()},
                     {"offset", payload.size()}});
    const auto values = t.data();
    payload.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
  };
  for (const auto& t : tensors) append("param", t.name, t.value);
  if (with_adam) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      append("adam_m", tensors[i].name, ckpt.adam.first_moment[i]);
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      append("adam_v", tensors[i].name, ckpt.adam.second_moment[i]);
    }
  }

  json meta = {{"step", ckpt.step}, {"param_count", param_count(ckpt.params)}};
  if (with_adam) {
    meta["adam"] = {{"step", ckpt.adam.step},
                    {"lr", ckpt.adam.hyper.lr},
                    {"beta1", ckpt.adam.hyper.beta1},
                    {"beta2", ckpt.adam.hyper.beta2},
                    {"epsilon", ckpt.adam.hyper.epsilon}};
  }
  if (ckpt.train) meta["train"] = json::parse(to_json(*ckpt.train));

  const json header = {{"format_version", Checkpoint::kFormatVersion},
                       {"model", model_json(ckpt.params.config)},
                       {"tensors", table},
                       {"payload_bytes", payload.size()},
                       {"meta", meta}};
  const std::string header_text = header.dump();

  std::string bytes(kMagic, kMagicSize);
  put_u64(bytes, header_text.size());
  bytes += header_text;
  bytes += payload;
  put_u64(bytes, fnv1a64(std::as_bytes(std::span(payload.data(), payload.size()))));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const Parsed p = parse(bytes, path);
  const std::string where = "checkpoint " + path.string();

  Checkpoint ckpt;
  try {
    ckpt.params.config = model_from_json(p.header.at("model"));
    ckpt.params.config.validate();
    const auto layout = param_layout(ckpt.params.config);
    const auto& table = p.header.at("tensors");

    auto read_tensor = [&](const json& entry, const ParamSpec& spec) {
      const Shape shape(entry.at("shape").get<std::vector<std::int64_t>>());
      if (entry.at("name").get<std::string>() != spec.name || !(shape == spec.shape)) {
        throw FormatError(where + ": tensor table entry " + entry.at("name").dump() + " " +
                          shape.str() + " does not match layout " + spec.name + " " +
                          spec.shape.str());
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::uint64_t nbytes = static_cast<std::uint64_t>(shape.numel()) * sizeof(float);
      if (offset > p.payload.size() || nbytes > p.payload.size() - offset) {
        throw FormatError(where + ": tensor " + spec.name + " lies outside the payload");
      }
      std::vector<float> values(static_cast<std::size_t>(shape.numel()));
      std::memcpy(values.data(), p.payload.data() + offset, nbytes);
      return TensorF(shape, std::move(values));
    };

    const std::size_t n = layout.size();
    if (table.size() != n && table.size() != 3 * n) {
      throw FormatError(where + ": tensor table has " + std::to_string(table.size()) +
                        " entries, expected " + std::to_string(n) + " or " +
                        std::to_string(3 * n));
    }
    const char* groups[] = {"param", "adam_m", "adam_v"};
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table[i].at("group").get<std::string>() != groups[i / n]) {
        throw FormatError(where + ": unexpected tensor group at entry " + std::to_string(i));
      }
      TensorF t = read_tensor(table[i], layout[i % n]);
      if (i < n) {
        ckpt.params.tensors.push_back({layout[i].name, std::move(t)});
      } else if (i < 2 * n) {
        ckpt.adam.first_moment.push_back(std::move(t));
      } else {
        ckpt.adam.second_moment.push_back(std::move(t));
      }
    }

    const auto& meta = p.header.at("meta");
    ckpt.step = meta.at("step").get<std::int64_t>();
    if (meta.contains("adam")) {
      const auto& a = meta.at("adam");
      ckpt.adam.step = a.at("step").get<std::int64_t>();
      ckpt.adam.hyper = {a.at("lr").get<double>(), a.at("beta1").get<double>(),
                         a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
    }
    if (table.size() == 3 * n && !meta.contains("adam")) {
      throw FormatError(where + ": optimizer moments without optimizer metadata");
    }
    if (meta.contains("train")) {
      ckpt.train = train_config_from_json(meta.at("train").dump());
      if (!(ckpt.train->model == ckpt.params.config)) {
        throw FormatError(where + ": training configuration describes a different model");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": invalid header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + ": invalid configuration: " + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(where + ": invalid shape: " + e.what());
  }
  return ckpt;
}

std::string read_checkpoint_header(const std::filesystem::path& path) {
  return parse(read_all(path), path).header.dump(2);
}

}  // namespace mtdeblur
