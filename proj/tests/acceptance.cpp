// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [criterion ...]
//
// With no criterion numbers every check runs. The trend experiments (6-8)
// train real models and take most of the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "ladder_checks.hpp"
#include "metric_oracles.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

#include "mtdeblur/checkpoint.hpp"
#include "mtdeblur/dataset.hpp"
#include "mtdeblur/experiments.hpp"
#include "mtdeblur/inference.hpp"
#include "mtdeblur/metrics.hpp"
#include "mtdeblur/model.hpp"
#include "mtdeblur/ops.hpp"
#include "mtdeblur/trainer.hpp"

using namespace mtdeblur;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::filesystem::path g_out_dir;

void write_artifact(const std::string& name, const std::string& text) {
  if (g_out_dir.empty()) return;
  std::filesystem::create_directories(g_out_dir);
  std::ofstream(g_out_dir / name) << text;
}

// ---------------------------------------------------------------- 1

constexpr double kGradTolerance = 1e-4;
constexpr double kStep = 1e-6;

// <x, fixed> as a graph node, under a caller-chosen op name so several
// projections can share one graph.
Var project_named(Graph<double>& g, const std::string& op, Var x, const TensorD& fixed) {
  g.register_gradient(op, [fixed](const auto&, const auto&, const auto& gout, const auto& gin) {
    if (gin[0] == nullptr) return;
    for (std::int64_t i = 0; i < fixed.numel(); ++i) (*gin[0])[i] += gout[0] * fixed[i];
  });
  return g.custom(op, {x}, [fixed](const std::vector<const TensorD*>& in) {
    return TensorD({1}, oracle::dot(*in[0], fixed));
  });
}

// Checks d<op(inputs), r>/d(input k) for every input of a primitive.
double check_primitive(const std::vector<TensorD>& inputs,
                       const std::function<Var(Graph<double>&, const std::vector<Var>&)>& build,
                       const std::function<TensorD(const std::vector<TensorD>&)>& eval,
                       std::mt19937_64& rng) {
  const TensorD sample = eval(inputs);
  const TensorD fixed = oracle::random_tensor<double>(sample.shape(), rng);
  Graph<double> g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t));
  const Var root = project_named(g, "proj", build(g, vars), fixed);
  const auto grads = g.backward(root);
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const TensorD& x) {
      auto copy = inputs;
      copy[k] = x;
      return oracle::dot(eval(copy), fixed);
    };
    const TensorD numeric = oracle::central_differences(f, inputs[k], kStep);
    worst = std::max(worst, oracle::relative_error(grads[vars[k]], numeric));
  }
  return worst;
}

struct GradReport {
  double primitives = 0;
  double model = 0;
  std::string worst_tensor;
};

GradReport gradient_checks() {
  std::mt19937_64 rng(11);
  GradReport report;
  auto prim = [&](double err) { report.primitives = std::max(report.primitives, err); };
  auto rnd = [&](Shape s) { return oracle::random_tensor<double>(s, rng); };

  // k3 same-padding, k3 stride 2, k1 pointwise, k4 transposed stride 2.
  struct ConvCase {
    Shape x, w;
    int stride, padding;
  };
  for (const auto& c : {ConvCase{{2, 3, 6, 6}, {4, 3, 3, 3}, 1, 1},
                        ConvCase{{1, 2, 8, 8}, {3, 2, 3, 3}, 2, 1},
                        ConvCase{{2, 4, 5, 5}, {2, 4, 1, 1}, 1, 0}}) {
    prim(check_primitive(
        {rnd(c.x), rnd(c.w), rnd({c.w[0]})},
        [&](Graph<double>& g, const std::vector<Var>& v) {
          return g.conv2d(v[0], v[1], v[2], c.stride, c.padding);
        },
        [&](const std::vector<TensorD>& in) {
          return conv2d(in[0], in[1], in[2], c.stride, c.padding);
        },
        rng));
  }
  prim(check_primitive(
      {rnd({2, 4, 4, 4}), rnd({4, 3, 4, 4}), rnd({3})},
      [](Graph<double>& g, const std::vector<Var>& v) {
        return g.transposed_conv2d(v[0], v[1], v[2], 2, 1);
      },
      [](const std::vector<TensorD>& in) { return transposed_conv2d(in[0], in[1], in[2], 2, 1); },
      rng));
  prim(check_primitive(
      {rnd({2, 3, 5, 5})}, [](Graph<double>& g, const std::vector<Var>& v) { return g.relu(v[0]); },
      [](const std::vector<TensorD>& in) { return relu(in[0]); }, rng));
  prim(check_primitive(
      {rnd({2, 3, 4, 4}), rnd({2, 3, 4, 4})},
      [](Graph<double>& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); },
      [](const std::vector<TensorD>& in) { return add(in[0], in[1]); }, rng));
  prim(check_primitive(
      {rnd({2, 3, 4, 4}), rnd({2, 5, 4, 4})},
      [](Graph<double>& g, const std::vector<Var>& v) { return g.concat_channels(v[0], v[1]); },
      [](const std::vector<TensorD>& in) { return concat_channels(in[0], in[1]); }, rng));
  prim(check_primitive(
      {rnd({2, 3, 4, 4}), rnd({2, 3, 4, 4})},
      [](Graph<double>& g, const std::vector<Var>& v) { return g.l1_loss(v[0], v[1]); },
      [](const std::vector<TensorD>& in) { return TensorD({1}, l1_loss(in[0], in[1])); }, rng));

  // Full forward: 16-channel model on 1x3x8x8, randomized output layer and
  // recurrent state so every path carries gradient. The objective projects
  // the output and both recurrent maps onto fixed random directions.
  ModelConfig config;
  config.base_channels = 16;
  auto params = init_model<double>(config, 5);
  std::uniform_real_distribution<double> u(-0.3, 0.3), unit(0.0, 1.0);
  for (auto& w : params.get("dec1.out.weight").data()) w = u(rng);
  TensorD blurred({1, 3, 8, 8}), previous({1, 3, 8, 8});
  for (auto& v : blurred.data()) v = unit(rng);
  for (auto& v : previous.data()) v = unit(rng);
  auto state = init_recurrent_state<double>(config, blurred.shape());
  for (auto& v : state.f1.data()) v = u(rng);
  for (auto& v : state.f2.data()) v = u(rng);
  const TensorD r_out = rnd(blurred.shape());
  const TensorD r_f1 = rnd(state.f1.shape());
  const TensorD r_f2 = rnd(state.f2.shape());

  auto objective = [&](const ModelParams<double>& p, const TensorD& x, const TensorD& prev,
                       const RecurrentState<double>& s) {
    const auto r = forward(p, x, prev, s);
    return oracle::dot(r.output, r_out) + oracle::dot(r.state.f1, r_f1) +
           oracle::dot(r.state.f2, r_f2);
  };

  Graph<double> g;
  const auto vars = bind_params(g, params);
  const Var vx = g.leaf(blurred), vp = g.leaf(previous);
  const Var vf1 = g.leaf(state.f1), vf2 = g.leaf(state.f2);
  const auto out = forward_graph(g, config, vars, vx, vp, vf1, vf2);
  const Var root = g.add(g.add(project_named(g, "proj_out", out.output, r_out),
                               project_named(g, "proj_f1", out.f1, r_f1)),
                         project_named(g, "proj_f2", out.f2, r_f2));
  const auto grads = g.backward(root);

  // Up to kSampled random coordinates per tensor; the error is the relative
  // L2 error over the sampled coordinates of that tensor.
  constexpr std::int64_t kSampled = 12;
  auto check = [&](const std::string& name, const TensorD& analytic, std::int64_t numel,
                   const std::function<double(std::int64_t, double)>& perturbed) {
    std::vector<std::int64_t> idx(numel);
    for (std::int64_t i = 0; i < numel; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(numel, kSampled));
    double diff = 0, na = 0, nn = 0;
    for (auto i : idx) {
      const double fd = (perturbed(i, kStep) - perturbed(i, -kStep)) / (2 * kStep);
      diff += (fd - analytic[i]) * (fd - analytic[i]);
      na += analytic[i] * analytic[i];
      nn += fd * fd;
    }
    const double scale = std::sqrt(std::max(na, nn));
    const double err = scale == 0 ? 0.0 : std::sqrt(diff) / scale;
    if (err >= report.model) {
      report.model = err;
      report.worst_tensor = name;
    }
  };

  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    check(params.tensors[k].name, grads[vars.vars[k]], params.tensors[k].value.numel(),
          [&](std::int64_t i, double h) {
            auto p = params;
            p.tensors[k].value[i] += h;
            return objective(p, blurred, previous, state);
          });
  }
  check("input", grads[vx], blurred.numel(), [&](std::int64_t i, double h) {
    auto x = blurred;
    x[i] += h;
    return objective(params, x, previous, state);
  });
  check("previous", grads[vp], previous.numel(), [&](std::int64_t i, double h) {
    auto x = previous;
    x[i] += h;
    return objective(params, blurred, x, state);
  });
  check("f1", grads[vf1], state.f1.numel(), [&](std::int64_t i, double h) {
    auto s = state;
    s.f1[i] += h;
    return objective(params, blurred, previous, s);
  });
  check("f2", grads[vf2], state.f2.numel(), [&](std::int64_t i, double h) {
    auto s = state;
    s.f2[i] += h;
    return objective(params, blurred, previous, s);
  });
  return report;
}

Outcome criterion_gradients() {
  const auto start = std::chrono::steady_clock::now();
  const auto r = gradient_checks();
  const double elapsed = seconds_since(start);
  const bool pass = r.primitives <= kGradTolerance && r.model <= kGradTolerance && elapsed < 120;
  return {pass, fmt("primitives max rel err %.2e, full model max rel err %.2e (%s), %.1f s",
                    r.primitives, r.model, r.worst_tensor.c_str(), elapsed)};
}

// ---------------------------------------------------------------- 2

Outcome criterion_ladder() {
  bool identity = true;
  double mean_err = 0, nest_err = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto r = ladder_checks::check_random_sequence(1000 + s);
    identity = identity && r.center_identity;
    mean_err = std::max(mean_err, r.max_mean_error);
    nest_err = std::max(nest_err, r.max_nesting_error);
  }
  const bool pass = identity && mean_err <= 1e-6 && nest_err <= 1e-6;
  return {pass, fmt("50 sequences: TL1 identity %s, mean err %.2e, nesting err %.2e",
                    identity ? "exact" : "BROKEN", mean_err, nest_err)};
}

// ---------------------------------------------------------------- 3

Outcome criterion_residual_identity() {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const auto params = init_model<float>(ModelConfig{}, 8);
  int images = 0, mismatches = 0;
  for (auto [h, w] : {std::pair{16, 16}, std::pair{13, 22}, std::pair{31, 9}}) {
    Image img(3, h, w);
    for (auto& v : img.data()) v = u(rng);
    for (const auto& out : progressive_deblur(params, img, {8, true})) {
      ++images;
      if (out != img) ++mismatches;
    }
  }
  return {mismatches == 0,
          fmt("%d iteration outputs over 3 inputs, %d differ from the input", images, mismatches)};
}

// ---------------------------------------------------------------- 4

Outcome criterion_chain_law() {
  const auto start = std::chrono::steady_clock::now();
  int checked = 0, wrong = 0, rejected = 0, wrongly_accepted = 0;
  for (int s = 0; s <= 15; ++s) {
    for (int T = 0; T <= 8; ++T) {
      for (int floor : {-1, 0, 1, 2, 3, 5, 7}) {
        for (int step : {0, 1, 2, 4}) {
          const bool valid = s % 2 == 1 && s >= 3 && s <= 13 && T >= 1 && T <= kMaxIterations &&
                             (floor == 1 || floor == 3 || floor == 5) && floor < s &&
                             step % 2 == 0 && step >= 0;
          try {
            const auto chain = make_chain(s, T, floor, step);
            if (!valid) {
              ++wrongly_accepted;
              continue;
            }
            ++checked;
            bool ok = chain.start_tl == s && static_cast<int>(chain.targets.size()) == T;
            for (int i = 0; ok && i < T; ++i) {
              // Step 0 is single-step mode: every target is the floor.
              const int expected = step == 0 ? floor : std::max(s - step * (i + 1), floor);
              ok = chain.targets[i] == expected;
            }
            if (!ok) ++wrong;
          } catch (const std::exception&) {
            if (valid) ++wrong;
            else ++rejected;
          }
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = wrong == 0 && wrongly_accepted == 0 && elapsed < 1.0;
  return {pass, fmt("%d valid chains match the closed form (%d mismatches), %d invalid "
                    "arguments rejected (%d accepted), %.3f s",
                    checked, wrong, rejected, wrongly_accepted, elapsed)};
}

// ---------------------------------------------------------------- 5

Outcome criterion_param_count() {
  ModelConfig config;
  config.base_channels = 32;
  config.kernel_size = 3;
  std::printf("  per-layer parameters (base 32, k 3, resblocks_per_stage %d):\n",
              config.resblocks_per_stage);
  std::int64_t total = 0;
  for (const auto& p : param_layout(config)) {
    const std::int64_t n = p.shape.numel();
    total += n;
    std::printf("    %-28s %-16s %9lld\n", p.name.c_str(), p.shape.str().c_str(),
                static_cast<long long>(n));
  }
  const auto count = param_count(config);
  const bool pass = count == total && count >= 2'400'000 && count <= 2'900'000;
  return {pass, fmt("param_count %lld (%.3fM) with resblocks_per_stage %d, band [2.40M, 2.90M]",
                    static_cast<long long>(count), count / 1e6, config.resblocks_per_stage)};
}

// ------------------------------------------------------------- 6, 7, 8

// Desk training budget shared by the trend experiments.
TrainConfig desk_train_config(std::int64_t steps) {
  TrainConfig c;
  c.model.base_channels = 16;
  c.model.resblocks_per_stage = 1;
  c.total_steps = steps;
  c.halve_every = steps / 2;
  c.batch_size = 4;
  c.patch_size = 32;
  c.adam.lr = 1e-3;
  return c;
}

constexpr std::int64_t kSweepSteps = 4000;
constexpr std::int64_t kComparisonSteps = 5000;

struct Splits {
  std::vector<Scene> train, test;
};

Splits desk_data(std::vector<int> native_tls, std::uint64_t seed) {
  DatasetSpec spec;
  spec.native_tls = std::move(native_tls);
  spec.global_seed = seed;
  const auto all = synthesize_dataset(spec);
  return {scenes_of(all, Split::kTrain), scenes_of(all, Split::kTest)};
}

void progress(const std::string& line) {
  std::printf("  %s\n", line.c_str());
  std::fflush(stdout);
}

Outcome criterion_tl_sweep() {
  const auto start = std::chrono::steady_clock::now();
  AblationSettings settings;
  settings.base = desk_train_config(kSweepSteps);
  const auto data = desk_data({7, 9, 11, 13}, 5);
  const auto result = run_tl_sweep(settings, data.train, data.test, progress);
  const double minutes = seconds_since(start) / 60;
  std::printf("%s", result.markdown().c_str());
  write_artifact("tl_sweep.md", result.markdown());
  write_artifact("tl_sweep.json", result.json());
  std::string medians;
  for (int tl : result.levels) medians += fmt(" TL%d %.3f", tl, result.median_psnr.at(tl));
  const bool pass = result.strictly_decreasing() && minutes <= 30;
  return {pass, fmt("median PSNR%s dB (%s), %.1f min", medians.c_str(),
                    result.strictly_decreasing() ? "strictly decreasing" : "NOT decreasing",
                    minutes)};
}

// Criteria 7 and 8 share one set of runs.
const SsVsMtResult& comparison() {
  static const SsVsMtResult result = [] {
    AblationSettings settings;
    settings.base = desk_train_config(kComparisonSteps);
    // Native level 1 + step * T, so the MT chain ends exactly at the sharp frame.
    const auto data = desk_data({1 + settings.mt_temporal_step * settings.mt_iterations}, 5);
    auto r = run_ss_vs_mt(settings, data.train, data.test, progress);
    std::printf("%s", r.markdown().c_str());
    write_artifact("ss_vs_mt.md", r.markdown());
    write_artifact("ss_vs_mt.json", r.json());
    return r;
  }();
  return result;
}

Outcome criterion_mt_vs_ss() {
  const auto& r = comparison();
  return {r.difference() >= 0.0,
          fmt("median MT %.3f dB, median SS %.3f dB, MT - SS = %+.3f dB (input %.3f dB)",
              r.median_mt, r.median_ss, r.difference(), r.median_input_psnr)};
}

Outcome criterion_iteration_curve() {
  const auto& r = comparison();
  const auto& c = r.mt_curve;
  if (c.size() < 8) return {false, fmt("curve has %zu points, need 8", c.size())};
  std::string curve;
  for (std::size_t i = 0; i < c.size(); ++i) curve += fmt(" it%zu %.3f", i + 1, c[i]);
  const double gain = c[3] - c[0];
  return {gain >= 0.2, fmt("it4 - it1 = %+.3f dB (need >= 0.2); curve%s; it6-8 vs it4: %+.3f "
                           "%+.3f %+.3f",
                           gain, curve.c_str(), c[5] - c[3], c[6] - c[3], c[7] - c[3])};
}

// ---------------------------------------------------------------- 9

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion_determinism() {
  auto spec = small_dataset_spec(6, 2, 2);
  spec.scene.height = 32;
  spec.scene.width = 32;
  const auto all = synthesize_dataset(spec);
  const auto train = scenes_of(all, Split::kTrain), val = scenes_of(all, Split::kVal);
  TrainConfig c;
  c.model.base_channels = 8;
  c.model.resblocks_per_stage = 1;
  c.total_steps = 12;
  c.halve_every = 6;
  c.patch_size = 16;
  c.total_iterations = 3;
  c.seed = 21;

  TempDir dir("acceptance");
  auto train_to = [&](Trainer& t, const std::filesystem::path& p) {
    t.run();
    save_checkpoint(t.checkpoint(), p);
    return file_bytes(p);
  };
  Trainer a(c, train, val), b(c, train, val);
  const auto bytes_a = train_to(a, dir.path() / "a.mtrnn");
  const auto bytes_b = train_to(b, dir.path() / "b.mtrnn");

  auto half = c;
  half.total_steps = 5;
  Trainer first(half, train, val);
  train_to(first, dir.path() / "half.mtrnn");
  Trainer resumed(c, train, val, load_checkpoint(dir.path() / "half.mtrnn"));
  const auto bytes_resumed = train_to(resumed, dir.path() / "resumed.mtrnn");

  const bool same = bytes_a == bytes_b;
  const bool resume = bytes_resumed == bytes_a;
  return {same && resume, fmt("seeded runs %s, resume at step 5 of 12 %s (%zu-byte checkpoints)",
                              same ? "bit-identical" : "DIFFER",
                              resume ? "bit-identical" : "DIFFERS", bytes_a.size())};
}

// ---------------------------------------------------------------- 10

Outcome criterion_metrics() {
  std::mt19937 rng(10);
  std::uniform_int_distribution<int> extent(11, 40), channels(0, 1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f), noise(-0.2f, 0.2f);
  double psnr_err = 0, ssim_err = 0;
  for (int i = 0; i < 100; ++i) {
    const int c = channels(rng) ? 3 : 1, h = extent(rng), w = extent(rng);
    Image a(c, h, w), b(c, h, w);
    for (std::size_t k = 0; k < a.size(); ++k) {
      a.data()[k] = u(rng);
      // Half the pairs are correlated so SSIM spans its range.
      b.data()[k] = i % 2 ? std::clamp(a.data()[k] + noise(rng), 0.0f, 1.0f) : u(rng);
    }
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - metric_oracles::psnr_direct(a, b)));
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - metric_oracles::ssim_direct(a, b)));
  }
  return {psnr_err <= 1e-6 && ssim_err <= 1e-6,
          fmt("100 pairs: max |PSNR - direct| %.2e dB, max |SSIM - direct| %.2e", psnr_err,
              ssim_err)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient correctness", criterion_gradients},
    {2, "ladder invariants", criterion_ladder},
    {3, "residual identity", criterion_residual_identity},
    {4, "chain schedule law", criterion_chain_law},
    {5, "parameter count calibration", criterion_param_count},
    {6, "TL difficulty trend", criterion_tl_sweep},
    {7, "MT vs SS", criterion_mt_vs_ss},
    {8, "iteration curve", criterion_iteration_curve},
    {9, "determinism and resume", criterion_determinism},
    {10, "metric oracles", criterion_metrics},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc) {
      g_out_dir = argv[++i];
    } else {
      selected.insert(std::stoi(arg));
    }
  }
  int failures = 0;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    std::printf("[%d] %s\n", c.id, c.name);
    std::fflush(stdout);
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
