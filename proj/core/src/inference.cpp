#include "mtdeblur/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>

#include "mtdeblur/error.hpp"
#include "mtdeblur/metrics.hpp"

namespace mtdeblur {
namespace {

nlohmann::json metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::json curve_json(const CurvePoint& p) {
  return {{"tl", p.tl},
          {"iter", p.iteration},
          {"psnr", metric(p.psnr)},
          {"ssim", p.ssim},
          {"count", p.count}};
}

}  // namespace

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<Image> progressive_deblur(const ModelParams<float>& params, const Image& blurred,
                                      const InferenceConfig& config) {
  if (config.iterations < 1) throw ArgumentError("inference needs at least one iteration");
  if (blurred.channels() != params.config.in_channels) {
    throw DimensionError("image has " + std::to_string(blurred.channels()) +
                         " channels, model expects " + std::to_string(params.config.in_channels));
  }
  const Image padded = pad_reflect_to_multiple(blurred, 4);
  const TensorF input = to_batch<float>(padded);
  TensorF previous = input;
  RecurrentState<float> state = init_recurrent_state<float>(params.config, input.shape());

  std::vector<Image> out;
  out.reserve(config.iterations);
  for (int i = 0; i < config.iterations; ++i) {
    auto step = forward(params, input, previous, state);
    step.output.require_finite("network output");
    Image estimate = crop(from_batch(step.output), 0, 0, blurred.height(), blurred.width());
    out.push_back(config.clamp ? clamp01(estimate) : std::move(estimate));
    previous = std::move(step.output);
    state = std::move(step.state);
  }
  return out;
}

double EvalReport::psnr_at(int iteration) const {
  for (const auto& p : per_iteration) {
    if (p.iteration == iteration) return p.psnr;
  }
  throw ArgumentError("iteration " + std::to_string(iteration) + " was not evaluated");
}

EvalReport evaluate(const ModelParams<float>& params, const std::vector<Scene>& scenes,
                    const EvalConfig& config, const EstimateSink& sink) {
  if (config.iterations < 1) throw ArgumentError("evaluation needs at least one iteration");
  if (config.report_iteration < 1 || config.report_iteration > config.iterations) {
    throw ArgumentError("report iteration must lie in 1.." + std::to_string(config.iterations));
  }
  EvalReport report;
  report.config = config;
  report.model = params.config;
  report.param_count = param_count(params);

  InferenceConfig inference{config.iterations, true};
  for (const auto& scene : scenes) {
    const int tl = config.input_tl.value_or(scene.ladder.native_tl);
    const Image& input = scene.ladder.at(tl);
    const Image& sharp = scene.ladder.sharp();
    ImageEval e;
    e.scene_id = scene.record.scene_id;
    e.tl = tl;
    e.input_psnr = psnr(input, sharp);
    e.input_ssim = ssim(input, sharp);
    const auto start = std::chrono::steady_clock::now();
    auto estimates = progressive_deblur(params, input, inference);
    e.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      if (config.quantize) estimates[i] = quantize16(estimates[i]);
      if (sink) sink(scene, static_cast<int>(i) + 1, estimates[i]);
      e.psnr.push_back(psnr(estimates[i], sharp));
      e.ssim.push_back(ssim(estimates[i], sharp));
    }
    report.per_image.push_back(std::move(e));
  }

  std::map<int, std::vector<const ImageEval*>> by_tl;
  for (const auto& e : report.per_image) by_tl[e.tl].push_back(&e);
  auto cell = [](int tl, int iter, const std::vector<const ImageEval*>& group) {
    std::vector<double> p, s;
    for (const auto* e : group) {
      p.push_back(e->psnr[iter - 1]);
      s.push_back(e->ssim[iter - 1]);
    }
    return CurvePoint{tl, iter, mean(p), mean(s), group.size()};
  };
  std::vector<const ImageEval*> all;
  for (const auto& e : report.per_image) all.push_back(&e);
  for (int iter = 1; iter <= config.iterations && !all.empty(); ++iter) {
    for (const auto& [tl, group] : by_tl) report.per_tl.push_back(cell(tl, iter, group));
    report.per_iteration.push_back(cell(0, iter, all));
  }
  if (!all.empty()) {
    const auto& agg = report.per_iteration[config.report_iteration - 1];
    report.psnr = agg.psnr;
    report.ssim = agg.ssim;
    std::vector<double> ip, is;
    for (const auto* e : all) {
      ip.push_back(e->input_psnr);
      is.push_back(e->input_ssim);
    }
    report.input_psnr = mean(ip);
    report.input_ssim = mean(is);
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["meta"] = {{"iterations", config.iterations},
               {"report_iteration", config.report_iteration},
               {"input_tl", config.input_tl ? nlohmann::json(*config.input_tl) : nlohmann::json()},
               {"quantized", config.quantize},
               {"param_count", param_count},
               {"model",
                {{"base_channels", model.base_channels},
                 {"resblocks_per_stage", model.resblocks_per_stage},
                 {"kernel_size", model.kernel_size},
                 {"width_multiplier", model.width_multiplier}}}};
  j["per_image"] = nlohmann::json::array();
  for (const auto& e : per_image) {
    nlohmann::json p = nlohmann::json::array();
    for (double v : e.psnr) p.push_back(metric(v));
    j["per_image"].push_back({{"scene_id", e.scene_id},
                              {"tl", e.tl},
                              {"input_psnr", metric(e.input_psnr)},
                              {"input_ssim", e.input_ssim},
                              {"psnr", metric(e.psnr[config.report_iteration - 1])},
                              {"ssim", e.ssim[config.report_iteration - 1]},
                              {"psnr_per_iter", p},
                              {"ssim_per_iter", e.ssim},
                              {"runtime_ms", e.runtime_ms}});
  }
  j["per_tl"] = nlohmann::json::array();
  for (const auto& p : per_tl) j["per_tl"].push_back(curve_json(p));
  j["per_iteration"] = nlohmann::json::array();
  for (const auto& p : per_iteration) j["per_iteration"].push_back(curve_json(p));
  j["aggregate"] = {{"count", per_image.size()},
                    {"psnr", metric(psnr)},
                    {"ssim", ssim},
                    {"input_psnr", metric(input_psnr)},
                    {"input_ssim", input_ssim}};
  return j.dump(2);
}

}  // namespace mtdeblur
