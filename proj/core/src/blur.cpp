#include "mtdeblur/blur.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "mtdeblur/hashing.hpp"

namespace mtdeblur {
namespace {

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t salt) {
  const std::uint64_t h = mix64(static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL ^
                                static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL ^ salt);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t salt) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(ix, iy, salt), b = lattice(ix + 1, iy, salt);
  const double c = lattice(ix, iy + 1, salt), d = lattice(ix + 1, iy + 1, salt);
  return (a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty;
}

// Low-frequency shading in [0, 1].
double shading(double x, double y, std::uint64_t salt) {
  return 0.7 * value_noise(x / 24.0, y / 24.0, salt) + 0.3 * value_noise(x / 11.0, y / 11.0, salt + 1);
}

enum class ShapeKind { kDisc, kEllipse, kRect };

struct MovingShape {
  ShapeKind kind;
  double cx, cy, vx, vy;
  double angle, omega;
  double half_u, half_v;
  double color[3];
  double second[3];
  // Checker period in pixels; 0 paints a flat colour.
  double checker;

  bool local(double x, double y, double t, double& u, double& v) const {
    const double dx = x - (cx + vx * t), dy = y - (cy + vy * t);
    const double th = angle + omega * t;
    const double cs = std::cos(th), sn = std::sin(th);
    u = cs * dx + sn * dy;
    v = -sn * dx + cs * dy;
    switch (kind) {
      case ShapeKind::kRect:
        return std::abs(u) <= half_u && std::abs(v) <= half_v;
      case ShapeKind::kDisc:
      case ShapeKind::kEllipse:
        return (u * u) / (half_u * half_u) + (v * v) / (half_v * half_v) <= 1.0;
    }
    return false;
  }

  double shade(double u, double v, int c) const {
    if (checker <= 0.0) return color[c];
    const auto cell = static_cast<std::int64_t>(std::floor(u / checker) + std::floor(v / checker));
    return (cell & 1) != 0 ? color[c] : second[c];
  }
};

struct Scene {
  double bg_vx = 0, bg_vy = 0;
  std::uint64_t bg_salt = 0;
  double bg_base[3] = {0, 0, 0};
  // Tiles are stored in background coordinates and move with it.
  std::vector<MovingShape> tiles;
  std::vector<MovingShape> shapes;
};

Scene make_scene(const SceneConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto velocity = [&](double& vx, double& vy) {
    const double speed = uniform(config.min_displacement, config.max_displacement) * config.motion_scale;
    const double dir = uniform(0.0, 2.0 * std::numbers::pi);
    vx = speed * std::cos(dir);
    vy = speed * std::sin(dir);
  };

  Scene scene;
  scene.bg_salt = rng();
  for (double& c : scene.bg_base) c = uniform(0.15, 0.6);
  if (config.background_velocity) {
    scene.bg_vx = config.background_velocity->first * config.motion_scale;
    scene.bg_vy = config.background_velocity->second * config.motion_scale;
  } else if (config.move_background) {
    velocity(scene.bg_vx, scene.bg_vy);
  }
  const double extent = std::min(config.height, config.width);
  // Margin so that tiles keep covering the frame as the background moves.
  const double margin = 0.5 * config.frame_count * config.max_displacement * config.motion_scale;
  for (int i = 0; i < config.background_tiles; ++i) {
    MovingShape s{};
    s.kind = static_cast<ShapeKind>(rng() % 3);
    s.cx = uniform(-margin, config.width + margin);
    s.cy = uniform(-margin, config.height + margin);
    s.half_u = uniform(0.06, 0.2) * extent;
    s.half_v = s.kind == ShapeKind::kDisc ? s.half_u : uniform(0.3, 1.0) * s.half_u;
    s.angle = uniform(0.0, std::numbers::pi);
    for (double& c : s.color) c = uniform(0.05, 0.95);
    scene.tiles.push_back(s);
  }
  for (int i = 0; i < config.num_shapes; ++i) {
    MovingShape s{};
    s.kind = static_cast<ShapeKind>(rng() % 3);
    s.cx = uniform(0.0, config.width);
    s.cy = uniform(0.0, config.height);
    velocity(s.vx, s.vy);
    s.half_u = uniform(0.1, 0.22) * extent;
    s.half_v = s.kind == ShapeKind::kDisc ? s.half_u : uniform(0.5, 1.0) * s.half_u;
    s.angle = uniform(0.0, 2.0 * std::numbers::pi);
    // Rim speed from rotation stays within the displacement budget.
    s.omega = uniform(-0.3, 0.3) * config.max_displacement * config.motion_scale / s.half_u;
    for (int c = 0; c < 3; ++c) {
      s.color[c] = uniform(0.3, 1.0);
      s.second[c] = s.color[c] * uniform(0.2, 0.6);
    }
    s.checker = unit(rng) < 0.5 ? 0.0 : uniform(5.0, 12.0);
    scene.shapes.push_back(s);
  }
  return scene;
}

Image render(const Scene& scene, const SceneConfig& config, double t) {
  Image img(config.channels, config.height, config.width);
  const int ss = config.supersample;
  const double inv = 1.0 / (ss * ss);
  std::vector<double> acc(static_cast<std::size_t>(config.channels));
  for (int y = 0; y < config.height; ++y) {
    for (int x = 0; x < config.width; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss, py = y + (sy + 0.5) / ss;
          const MovingShape* hit = nullptr;
          double u = 0, v = 0;
          for (auto it = scene.shapes.rbegin(); it != scene.shapes.rend(); ++it) {
            if (it->local(px, py, t, u, v)) {
              hit = &*it;
              break;
            }
          }
          if (hit != nullptr) {
            for (int c = 0; c < config.channels; ++c) acc[c] += hit->shade(u, v, c);
            continue;
          }
          const double bx = px - scene.bg_vx * t, by = py - scene.bg_vy * t;
          const MovingShape* tile = nullptr;
          for (auto it = scene.tiles.rbegin(); it != scene.tiles.rend(); ++it) {
            if (it->local(bx, by, 0.0, u, v)) {
              tile = &*it;
              break;
            }
          }
          for (int c = 0; c < config.channels; ++c) {
            acc[c] += tile != nullptr
                          ? tile->color[c]
                          : std::clamp(scene.bg_base[c] + 0.4 * (shading(bx, by, scene.bg_salt + 31 * c) - 0.5),
                                       0.0, 1.0);
          }
        }
      }
      for (int c = 0; c < config.channels; ++c) img.at(c, y, x) = static_cast<float>(acc[c] * inv);
    }
  }
  return img;
}

void require_odd_level(int tl, const char* what) {
  if (tl < 1 || tl % 2 == 0) {
    throw ArgumentError(std::string(what) + " must be a positive odd temporal level, got " +
                        std::to_string(tl));
  }
}

int rotated_dim(int rotations, int h, int w, bool want_height) {
  const bool swap = rotations % 2 != 0;
  return want_height ? (swap ? w : h) : (swap ? h : w);
}

}  // namespace

void SceneConfig::validate() const {
  if (height < 4 || width < 4) throw ConfigError("scene must be at least 4x4");
  if (channels != 1 && channels != 3) throw ConfigError("scene channels must be 1 or 3");
  if (frame_count % 2 == 0) {
    throw ConfigError("frame_count must be odd so a centre frame exists, got " + std::to_string(frame_count));
  }
  if (frame_count < kMaxTemporalLevel) {
    throw ConfigError("frame_count must be at least " + std::to_string(kMaxTemporalLevel));
  }
  if (num_shapes < 0) throw ConfigError("num_shapes must be non-negative");
  if (background_tiles < 0) throw ConfigError("background_tiles must be non-negative");
  if (min_displacement < 0 || max_displacement < min_displacement) {
    throw ConfigError("displacement range must satisfy 0 <= min <= max");
  }
  if (motion_scale < 0) throw ConfigError("motion_scale must be non-negative");
  if (supersample < 1) throw ConfigError("supersample must be positive");
}

FrameSequence synth_sequence(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  const Scene scene = make_scene(config, seed);
  FrameSequence seq;
  seq.seed = seed;
  const int center = config.frame_count / 2;
  for (int f = 0; f < config.frame_count; ++f) seq.frames.push_back(render(scene, config, f - center));
  return seq;
}

FrameSequence ingest_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty() || files.size() % 2 == 0) {
    throw ArgumentError("ingest needs an odd number of frames, found " + std::to_string(files.size()) +
                        " in " + dir.string());
  }
  FrameSequence seq;
  seq.frame_rate_tag = 0;
  for (const auto& f : files) {
    seq.frames.push_back(read_png(f));
    if (!seq.frames.back().same_shape(seq.frames.front())) {
      throw DimensionError("frame " + f.string() + " differs in shape from the first frame");
    }
  }
  return seq;
}

Image average_frames(std::span<const Image> frames, int tl) {
  require_odd_level(tl, "averaging window");
  if (frames.empty()) throw ArgumentError("no frames to average");
  if (static_cast<std::size_t>(tl) > frames.size()) {
    throw ArgumentError("window of " + std::to_string(tl) + " frames exceeds sequence of " +
                        std::to_string(frames.size()));
  }
  const std::size_t center = frames.size() / 2;
  const std::size_t first = center - static_cast<std::size_t>(tl / 2);
  const Image& ref = frames[center];
  std::vector<double> acc(ref.size(), 0.0);
  for (std::size_t f = first; f < first + static_cast<std::size_t>(tl); ++f) {
    if (!frames[f].same_shape(ref)) throw DimensionError("frames differ in shape");
    const auto& d = frames[f].data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
  }
  Image out(ref.channels(), ref.height(), ref.width());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.data()[i] = std::clamp(static_cast<float>(acc[i] / tl), 0.0f, 1.0f);
  }
  return out;
}

const Image& TemporalLadder::at(int tl) const {
  auto it = images.find(tl);
  if (it == images.end()) throw ArgumentError("ladder has no temporal level " + std::to_string(tl));
  return it->second;
}

TemporalLadder build_ladder(const FrameSequence& seq, int native_tl) {
  if (native_tl < 7 || native_tl > kMaxTemporalLevel || native_tl % 2 == 0) {
    throw ArgumentError("native temporal level must be one of 7, 9, 11, 13, got " + std::to_string(native_tl));
  }
  if (seq.frames.size() < static_cast<std::size_t>(native_tl)) {
    throw ArgumentError("sequence of " + std::to_string(seq.frames.size()) +
                        " frames is too short for temporal level " + std::to_string(native_tl));
  }
  TemporalLadder ladder;
  ladder.native_tl = native_tl;
  ladder.images[1] = seq.center();
  for (int tl = 3; tl <= native_tl; tl += 2) ladder.images[tl] = average_frames(seq.frames, tl);
  return ladder;
}

double mean_gradient_magnitude(const Image& image) {
  double s = 0;
  std::size_t n = 0;
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y + 1 < image.height(); ++y)
      for (int x = 0; x + 1 < image.width(); ++x) {
        const double gx = image.at(c, y, x + 1) - image.at(c, y, x);
        const double gy = image.at(c, y + 1, x) - image.at(c, y, x);
        s += std::sqrt(gx * gx + gy * gy);
        ++n;
      }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

AugmentDraw draw_augment(std::mt19937_64& rng, int height, int width, int patch) {
  if (patch < 1 || patch > height || patch > width) {
    throw ArgumentError("patch " + std::to_string(patch) + " does not fit image " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
  AugmentDraw d;
  d.patch = patch;
  d.top = std::uniform_int_distribution<int>(0, height - patch)(rng);
  d.left = std::uniform_int_distribution<int>(0, width - patch)(rng);
  d.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  d.rotations = std::uniform_int_distribution<int>(0, 3)(rng);
  return d;
}

Image apply_augment(const Image& image, const AugmentDraw& draw) {
  Image cropped = crop(image, draw.top, draw.left, draw.patch, draw.patch);
  const int h = cropped.height(), w = cropped.width();
  Image out(image.channels(), rotated_dim(draw.rotations, h, w, true),
            rotated_dim(draw.rotations, h, w, false));
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int fx = draw.flip ? w - 1 - x : x;
        int ry = y, rx = fx;
        // Counter-clockwise quarter turns of the (flipped) patch.
        for (int r = 0, ch = h, cw = w; r < draw.rotations % 4; ++r) {
          const int ny = cw - 1 - rx, nx = ry;
          ry = ny;
          rx = nx;
          std::swap(ch, cw);
        }
        out.at(c, ry, rx) = cropped.at(c, y, x);
      }
    }
  }
  return out;
}

TemporalLadder apply_augment(const TemporalLadder& ladder, const AugmentDraw& draw) {
  TemporalLadder out;
  out.native_tl = ladder.native_tl;
  for (const auto& [tl, img] : ladder.images) out.images[tl] = apply_augment(img, draw);
  return out;
}

TemporalLadder augment(const TemporalLadder& ladder, std::mt19937_64& rng, int patch) {
  if (ladder.images.empty()) throw ArgumentError("cannot augment an empty ladder");
  const Image& ref = ladder.images.begin()->second;
  return apply_augment(ladder, draw_augment(rng, ref.height(), ref.width(), patch));
}

}  // namespace mtdeblur
