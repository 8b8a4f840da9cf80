#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mtdeblur/dataset.hpp"
#include "mtdeblur/inference.hpp"
#include "mtdeblur/trainer.hpp"

namespace mtdeblur {

/// Shared settings of the desk-scale ablations. `base` supplies the model,
/// optimizer, step budget, batch and patch; each arm overrides the chain
/// fields (input level, iterations, temporal step).
struct AblationSettings {
  TrainConfig base;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  /// Fixed input levels of the difficulty sweep.
  std::vector<int> sweep_levels{3, 5, 7};
  int mt_iterations = 4;
  int mt_temporal_step = 2;
  /// Inference iterations evaluated for the multi-temporal arm.
  int eval_iterations = 8;
};

struct RunOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  TrainConfig config;
  EvalReport report;
  /// Mean held-out PSNR at the arm's training iteration count.
  double psnr = 0.0;
  double ssim = 0.0;
  double train_seconds = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains and evaluates one arm: `config` on `train`, scored on `test` at
/// report_iteration with the given number of inference iterations.
RunOutcome run_arm(const std::string& arm, const TrainConfig& config,
                   const std::vector<Scene>& train, const std::vector<Scene>& test,
                   int eval_iterations, int report_iteration, const ProgressFn& progress = {});

/// Single-step models trained separately on each fixed input level, all
/// targeting the sharp frame.
struct TlSweepResult {
  std::vector<int> levels;
  std::map<int, std::vector<RunOutcome>> runs;
  std::map<int, double> median_psnr;
  std::map<int, double> median_input_psnr;

  bool strictly_decreasing() const;
  std::string markdown() const;
  std::string json() const;
};

TlSweepResult run_tl_sweep(const AblationSettings& settings, const std::vector<Scene>& train,
                           const std::vector<Scene>& test, const ProgressFn& progress = {});

/// Equal-step comparison of multi-temporal training (mt_iterations,
/// mt_temporal_step) against single-step training (one iteration straight
/// to the sharp frame).
struct SsVsMtResult {
  std::vector<RunOutcome> ss;
  std::vector<RunOutcome> mt;
  double median_ss = 0.0;
  double median_mt = 0.0;
  /// median_mt - median_ss in dB.
  double difference() const { return median_mt - median_ss; }
  /// Median over seeds of the pooled multi-temporal PSNR per inference
  /// iteration; index i is iteration i + 1.
  std::vector<double> mt_curve;
  double median_input_psnr = 0.0;

  std::string markdown() const;
  std::string json() const;
};

SsVsMtResult run_ss_vs_mt(const AblationSettings& settings, const std::vector<Scene>& train,
                          const std::vector<Scene>& test, const ProgressFn& progress = {});

}  // namespace mtdeblur
