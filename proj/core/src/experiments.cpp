#include "mtdeblur/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "mtdeblur/error.hpp"

namespace mtdeblur {
namespace {

using nlohmann::json;

json metric(double v) { return std::isinf(v) ? json("inf") : json(v); }

std::string fmt(double v, int digits = 2) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json run_json(const RunOutcome& r) {
  json curve = json::array();
  for (const auto& p : r.report.per_iteration) curve.push_back(metric(p.psnr));
  return {{"arm", r.arm},
          {"seed", r.seed},
          {"psnr", metric(r.psnr)},
          {"ssim", r.ssim},
          {"input_psnr", metric(r.report.input_psnr)},
          {"psnr_per_iter", curve},
          {"train_seconds", r.train_seconds},
          {"config", json::parse(to_json(r.config))}};
}

std::vector<double> psnrs(const std::vector<RunOutcome>& runs) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.psnr);
  return out;
}

}  // namespace

RunOutcome run_arm(const std::string& arm, const TrainConfig& config,
                   const std::vector<Scene>& train, const std::vector<Scene>& test,
                   int eval_iterations, int report_iteration, const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(config, train, {});
  trainer.run();
  RunOutcome out;
  out.arm = arm;
  out.seed = config.seed;
  out.config = config;
  out.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EvalConfig eval{eval_iterations, report_iteration, config.input_tl, true};
  out.report = evaluate(trainer.params(), test, eval);
  out.psnr = out.report.psnr;
  out.ssim = out.report.ssim;
  if (progress) {
    progress(arm + " seed " + std::to_string(config.seed) + ": " + fmt(out.psnr) + " dB (input " +
             fmt(out.report.input_psnr) + " dB, " + fmt(out.train_seconds, 0) + " s)");
  }
  return out;
}

bool TlSweepResult::strictly_decreasing() const {
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(median_psnr.at(levels[i]) < median_psnr.at(levels[i - 1]))) return false;
  }
  return !levels.empty();
}

TlSweepResult run_tl_sweep(const AblationSettings& settings, const std::vector<Scene>& train,
                           const std::vector<Scene>& test, const ProgressFn& progress) {
  if (settings.seeds.empty()) throw ArgumentError("ablation needs at least one seed");
  TlSweepResult result;
  result.levels = settings.sweep_levels;
  for (int tl : settings.sweep_levels) {
    std::vector<double> inputs;
    for (auto seed : settings.seeds) {
      TrainConfig c = settings.base;
      c.input_tl = tl;
      c.total_iterations = 1;
      c.temporal_step = 0;
      c.seed = seed;
      c.validate_every = 0;
      auto run = run_arm("ss-tl" + std::to_string(tl), c, train, test, 1, 1, progress);
      inputs.push_back(run.report.input_psnr);
      result.runs[tl].push_back(std::move(run));
    }
    result.median_psnr[tl] = median(psnrs(result.runs[tl]));
    result.median_input_psnr[tl] = median(inputs);
  }
  return result;
}

std::string TlSweepResult::markdown() const {
  std::ostringstream md;
  md << "# Temporal level sweep\n\n"
     << "Single-step models trained and tested on one input level each, target TL 1.\n\n"
     << "| TL | median PSNR (dB) | median input PSNR (dB) | runs |\n|---|---|---|---|\n";
  for (int tl : levels) {
    md << "| " << tl << " | " << fmt(median_psnr.at(tl)) << " | " << fmt(median_input_psnr.at(tl))
       << " | ";
    for (std::size_t i = 0; i < runs.at(tl).size(); ++i) {
      md << (i ? ", " : "") << fmt(runs.at(tl)[i].psnr);
    }
    md << " |\n";
  }
  md << "\nStrictly decreasing in TL: " << (strictly_decreasing() ? "yes" : "no") << "\n";
  return md.str();
}

std::string TlSweepResult::json() const {
  nlohmann::json j;
  j["mode"] = "tl-sweep";
  j["levels"] = levels;
  j["strictly_decreasing"] = strictly_decreasing();
  j["per_level"] = nlohmann::json::array();
  for (int tl : levels) {
    nlohmann::json runs_j = nlohmann::json::array();
    for (const auto& r : runs.at(tl)) runs_j.push_back(run_json(r));
    j["per_level"].push_back({{"tl", tl},
                              {"median_psnr", metric(median_psnr.at(tl))},
                              {"median_input_psnr", metric(median_input_psnr.at(tl))},
                              {"runs", runs_j}});
  }
  return j.dump(2);
}

SsVsMtResult run_ss_vs_mt(const AblationSettings& settings, const std::vector<Scene>& train,
                          const std::vector<Scene>& test, const ProgressFn& progress) {
  if (settings.seeds.empty()) throw ArgumentError("ablation needs at least one seed");
  if (settings.eval_iterations < settings.mt_iterations) {
    throw ArgumentError("eval_iterations must cover the training iterations");
  }
  SsVsMtResult result;
  std::vector<double> inputs;
  for (auto seed : settings.seeds) {
    TrainConfig ss = settings.base;
    ss.total_iterations = 1;
    ss.temporal_step = 0;
    ss.seed = seed;
    ss.validate_every = 0;
    result.ss.push_back(run_arm("ss", ss, train, test, 1, 1, progress));

    TrainConfig mt = settings.base;
    mt.total_iterations = settings.mt_iterations;
    mt.temporal_step = settings.mt_temporal_step;
    mt.seed = seed;
    mt.validate_every = 0;
    result.mt.push_back(run_arm("mt", mt, train, test, settings.eval_iterations,
                                settings.mt_iterations, progress));
    inputs.push_back(result.mt.back().report.input_psnr);
  }
  result.median_ss = median(psnrs(result.ss));
  result.median_mt = median(psnrs(result.mt));
  result.median_input_psnr = median(inputs);
  for (int it = 1; it <= settings.eval_iterations; ++it) {
    std::vector<double> at;
    for (const auto& r : result.mt) at.push_back(r.report.psnr_at(it));
    result.mt_curve.push_back(median(at));
  }
  return result;
}

std::string SsVsMtResult::markdown() const {
  std::ostringstream md;
  md << "# Multi-temporal vs single-step\n\n"
     << "Same network, same number of optimizer steps, same data.\n\n"
     << "| arm | median PSNR (dB) | runs |\n|---|---|---|\n";
  auto row = [&](const char* name, double med, const std::vector<RunOutcome>& runs) {
    md << "| " << name << " | " << fmt(med) << " | ";
    for (std::size_t i = 0; i < runs.size(); ++i) md << (i ? ", " : "") << fmt(runs[i].psnr);
    md << " |\n";
  };
  row("SS", median_ss, ss);
  row("MT", median_mt, mt);
  md << "\nInput PSNR (median): " << fmt(median_input_psnr) << " dB\n"
     << "Difference MT - SS: " << (difference() >= 0 ? "+" : "") << fmt(difference(), 3)
     << " dB\n\n## MT PSNR per inference iteration (median over seeds)\n\n"
     << "| iteration | PSNR (dB) |\n|---|---|\n";
  for (std::size_t i = 0; i < mt_curve.size(); ++i) {
    md << "| " << i + 1 << " | " << fmt(mt_curve[i], 3) << " |\n";
  }
  return md.str();
}

std::string SsVsMtResult::json() const {
  nlohmann::json j;
  j["mode"] = "ss-vs-mt";
  j["median_ss_psnr"] = metric(median_ss);
  j["median_mt_psnr"] = metric(median_mt);
  j["difference_db"] = difference();
  j["median_input_psnr"] = metric(median_input_psnr);
  j["mt_curve"] = nlohmann::json::array();
  for (std::size_t i = 0; i < mt_curve.size(); ++i) {
    j["mt_curve"].push_back({{"iter", i + 1}, {"psnr", metric(mt_curve[i])}});
  }
  j["ss_runs"] = nlohmann::json::array();
  for (const auto& r : ss) j["ss_runs"].push_back(run_json(r));
  j["mt_runs"] = nlohmann::json::array();
  for (const auto& r : mt) j["mt_runs"].push_back(run_json(r));
  return j.dump(2);
}

}  // namespace mtdeblur
