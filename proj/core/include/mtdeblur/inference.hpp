#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtdeblur/dataset.hpp"
#include "mtdeblur/image.hpp"
#include "mtdeblur/model.hpp"

namespace mtdeblur {

struct InferenceConfig {
  int iterations = 6;
  /// Clamp emitted estimates to [0,1]. The recurrence always sees the raw
  /// network output.
  bool clamp = true;
};

/// Runs the shared network `iterations` times starting from the blurred
/// image and a zero recurrent state. Returns the estimates of iterations
/// 1..T. Inputs of any size are reflect-padded to a multiple of 4 and the
/// outputs cropped back.
std::vector<Image> progressive_deblur(const ModelParams<float>& params, const Image& blurred,
                                      const InferenceConfig& config = {});

struct EvalConfig {
  /// Inference iterations evaluated, 1..iterations.
  int iterations = 8;
  /// Iteration whose metrics form per-image and aggregate values.
  int report_iteration = 6;
  /// Evaluate from this temporal level instead of each scene's native one.
  std::optional<int> input_tl;
  /// Quantize estimates to 16-bit levels before scoring, as written to disk.
  bool quantize = true;
};

struct ImageEval {
  std::string scene_id;
  int tl = 0;
  double input_psnr = 0.0;
  double input_ssim = 0.0;
  /// Index i holds iteration i + 1.
  std::vector<double> psnr;
  std::vector<double> ssim;
  double runtime_ms = 0.0;
};

/// Mean metrics of one (tl, iteration) cell. tl is 0 when pooled over all
/// levels.
struct CurvePoint {
  int tl = 0;
  int iteration = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  EvalConfig config;
  ModelConfig model;
  std::int64_t param_count = 0;
  std::vector<ImageEval> per_image;
  std::vector<CurvePoint> per_tl;
  std::vector<CurvePoint> per_iteration;
  /// Means over images at config.report_iteration.
  double psnr = 0.0;
  double ssim = 0.0;
  double input_psnr = 0.0;
  double input_ssim = 0.0;

  /// Pooled PSNR at `iteration` (1-based).
  double psnr_at(int iteration) const;
  /// Schema {meta, per_image, per_tl, per_iteration, aggregate}. Infinite
  /// PSNR is written as the string "inf".
  std::string to_json() const;
};

/// Called with every clamped estimate, for writing per-iteration images.
using EstimateSink = std::function<void(const Scene&, int iteration, const Image&)>;

/// Scores progressive deblurring of every scene against its sharp frame.
EvalReport evaluate(const ModelParams<float>& params, const std::vector<Scene>& scenes,
                    const EvalConfig& config, const EstimateSink& sink = {});

double mean(const std::vector<double>& values);
double median(std::vector<double> values);

}  // namespace mtdeblur
