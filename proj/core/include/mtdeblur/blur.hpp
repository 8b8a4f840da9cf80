#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mtdeblur/image.hpp"

namespace mtdeblur {

/// Parameters of the procedural high-frame-rate scene generator: two-tone
/// shapes translating and rotating over a translating background made of
/// flat tiles on smooth shading.
struct SceneConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  int frame_count = 13;
  int num_shapes = 3;
  /// Flat-coloured tiles carried by the background.
  int background_tiles = 10;
  /// Per-frame displacement range in pixels.
  double min_displacement = 0.5;
  double max_displacement = 2.0;
  /// Multiplies every velocity; 0 gives a static scene.
  double motion_scale = 1.0;
  bool move_background = true;
  /// Fixed background velocity (px/frame) overriding the random draw.
  std::optional<std::pair<double, double>> background_velocity;
  /// Samples per pixel along each axis.
  int supersample = 3;

  void validate() const;
};

/// Consecutive sharp frames; the center frame is the sharp ground truth.
struct FrameSequence {
  std::vector<Image> frames;
  int frame_rate_tag = 240;
  std::uint64_t seed = 0;

  const Image& center() const { return frames.at(frames.size() / 2); }
};

FrameSequence synth_sequence(const SceneConfig& config, std::uint64_t seed);

/// Reads every *.png in `dir` in filename order. The count must be odd.
FrameSequence ingest_frames(const std::filesystem::path& dir);

/// Pixel-wise mean of the `tl` frames centred on the sequence centre.
Image average_frames(std::span<const Image> frames, int tl);

/// Blurred renditions of one scene at every odd temporal level up to
/// `native_tl`. images[1] is the sharp centre frame; images[native_tl] is
/// the observed blurred input.
struct TemporalLadder {
  std::map<int, Image> images;
  int native_tl = 0;

  const Image& at(int tl) const;
  const Image& blurred() const { return at(native_tl); }
  const Image& sharp() const { return at(1); }
  bool has(int tl) const { return images.count(tl) != 0; }

  friend bool operator==(const TemporalLadder&, const TemporalLadder&) = default;
};

inline constexpr int kMaxTemporalLevel = 13;

TemporalLadder build_ladder(const FrameSequence& seq, int native_tl);

/// Mean absolute finite-difference gradient, a proxy for remaining sharpness.
double mean_gradient_magnitude(const Image& image);

/// One random crop / horizontal flip / 90-degree rotation draw.
struct AugmentDraw {
  int top = 0;
  int left = 0;
  int patch = 0;
  bool flip = false;
  int rotations = 0;  // counter-clockwise quarter turns
};

AugmentDraw draw_augment(std::mt19937_64& rng, int height, int width, int patch);
Image apply_augment(const Image& image, const AugmentDraw& draw);
/// Applies one draw to every temporal level so the levels stay aligned.
TemporalLadder apply_augment(const TemporalLadder& ladder, const AugmentDraw& draw);
TemporalLadder augment(const TemporalLadder& ladder, std::mt19937_64& rng, int patch);

}  // namespace mtdeblur
