#include "mtdeblur_tools/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>

#include "json_config.hpp"
#include "mtdeblur/checkpoint.hpp"
#include "mtdeblur/dataset.hpp"
#include "mtdeblur/error.hpp"
#include "mtdeblur/experiments.hpp"
#include "mtdeblur/inference.hpp"
#include "mtdeblur/metrics.hpp"
#include "mtdeblur/trainer.hpp"

namespace mtdeblur::cli {
namespace {

namespace fs = std::filesystem;

// Writes `text` to `path` through a temporary file so a failure never
// leaves a partial report behind.
void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << text;
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_db(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::string out;
  std::uint64_t seed = 0;
  std::optional<int> scenes;
  int train = 40, val = 8, test = 16;
  int height = 64, width = 64, frames = 13, shapes = 3, tiles = 10, supersample = 3;
  double min_disp = 0.5, max_disp = 2.0;
  std::vector<int> native_tls{7, 9, 11, 13};
  std::vector<std::string> ingest;
  int ingest_native_tl = 7;
  std::string ingest_split = "test";
};

DatasetSpec dataset_spec(const SynthOptions& o) {
  DatasetSpec spec;
  spec.scene.height = o.height;
  spec.scene.width = o.width;
  spec.scene.frame_count = o.frames;
  spec.scene.num_shapes = o.shapes;
  spec.scene.background_tiles = o.tiles;
  spec.scene.supersample = o.supersample;
  spec.scene.min_displacement = o.min_disp;
  spec.scene.max_displacement = o.max_disp;
  spec.native_tls = o.native_tls;
  spec.global_seed = o.seed;
  spec.train_scenes = o.train;
  spec.val_scenes = o.val;
  spec.test_scenes = o.test;
  if (o.scenes) {
    const int n = *o.scenes;
    if (n < 1) throw ArgumentError("--scenes must be positive");
    spec.test_scenes = n / 4;
    spec.val_scenes = n / 8;
    spec.train_scenes = n - spec.test_scenes - spec.val_scenes;
  }
  return spec;
}

void add_synth(CLI::App& app, SynthOptions& o, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("synth", "Synthesize a temporal-level blur dataset");
  cmd->add_option("--out", o.out, "Dataset root directory")->required();
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--scenes", o.scenes, "Total scene count, split 5:1:2 into train/val/test");
  cmd->add_option("--train", o.train, "Training scenes");
  cmd->add_option("--val", o.val, "Validation scenes");
  cmd->add_option("--test", o.test, "Test scenes");
  cmd->add_option("--height", o.height);
  cmd->add_option("--width", o.width);
  cmd->add_option("--frames", o.frames, "Frames per sequence (odd, >= 13)");
  cmd->add_option("--shapes", o.shapes, "Moving shapes per scene");
  cmd->add_option("--tiles", o.tiles, "Background tiles per scene");
  cmd->add_option("--supersample", o.supersample);
  cmd->add_option("--min-disp", o.min_disp, "Minimum per-frame displacement (px)");
  cmd->add_option("--max-disp", o.max_disp, "Maximum per-frame displacement (px)");
  cmd->add_option("--native-tls", o.native_tls, "Native temporal levels, round-robin")->delimiter(',');
  cmd->add_option("--ingest", o.ingest, "Directory of sharp frames; one scene per directory");
  cmd->add_option("--ingest-native-tl", o.ingest_native_tl);
  cmd->add_option("--ingest-split", o.ingest_split)->check(CLI::IsMember({"train", "val", "test"}));
  cmd->callback([&] {
    action = [&] {
      std::vector<Scene> scenes;
      std::uint64_t seed = o.seed;
      if (!o.ingest.empty()) {
        for (const auto& dir : o.ingest) {
          auto frames = ingest_frames(dir);
          const std::string id = fs::path(dir).filename().empty()
                                     ? fs::path(dir).parent_path().filename().string()
                                     : fs::path(dir).filename().string();
          scenes.push_back(
              scene_from_frames(frames, id, o.ingest_native_tl, parse_split(o.ingest_split)));
        }
      } else {
        scenes = synthesize_dataset(dataset_spec(o));
      }
      auto manifest = write_dataset(scenes, seed, o.out);
      out << "wrote " << manifest.records.size() << " scenes to " << o.out << " (train "
          << manifest.count(Split::kTrain) << ", val " << manifest.count(Split::kVal) << ", test "
          << manifest.count(Split::kTest) << ")\n";
    };
  });
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string out;
  std::string resume;
  std::int64_t log_every = 100;
  std::optional<std::int64_t> steps, halve_every, validate_every, checkpoint_every;
  std::optional<int> batch, patch, iterations, temporal_step, floor, input_tl, validation_iterations;
  std::optional<int> base_channels, resblocks, kernel;
  std::optional<double> width_mult, lr, beta1, beta2, eps;
  std::optional<std::uint64_t> seed;
  std::optional<bool> step_per_iteration;
};

template <typename T, typename U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = static_cast<U>(*v);
}

TrainConfig train_config(const TrainOptions& o, TrainConfig c) {
  apply(o.steps, c.total_steps);
  apply(o.halve_every, c.halve_every);
  apply(o.validate_every, c.validate_every);
  apply(o.checkpoint_every, c.checkpoint_every);
  apply(o.batch, c.batch_size);
  apply(o.patch, c.patch_size);
  apply(o.iterations, c.total_iterations);
  apply(o.temporal_step, c.temporal_step);
  apply(o.floor, c.target_floor_tl);
  apply(o.validation_iterations, c.validation_iterations);
  if (o.input_tl) c.input_tl = *o.input_tl > 0 ? std::optional<int>(*o.input_tl) : std::nullopt;
  apply(o.base_channels, c.model.base_channels);
  apply(o.resblocks, c.model.resblocks_per_stage);
  apply(o.kernel, c.model.kernel_size);
  apply(o.width_mult, c.model.width_multiplier);
  apply(o.lr, c.adam.lr);
  apply(o.beta1, c.adam.beta1);
  apply(o.beta2, c.adam.beta2);
  apply(o.eps, c.adam.epsilon);
  apply(o.seed, c.seed);
  apply(o.step_per_iteration, c.step_per_iteration);
  return c;
}

void add_train_flags(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--steps", o.steps, "Total optimizer steps");
  cmd->add_option("--halve-every", o.halve_every, "Halve the learning rate every N steps");
  cmd->add_option("--batch", o.batch, "Batch size");
  cmd->add_option("--patch", o.patch, "Patch size (multiple of 4)");
  cmd->add_option("--iterations", o.iterations, "Recurrent training iterations (1..7)");
  cmd->add_option("--temporal-step", o.temporal_step, "TL decrement per iteration; 0 = direct");
  cmd->add_option("--floor", o.floor, "Target floor TL (1, 3 or 5)");
  cmd->add_option("--input-tl", o.input_tl, "Fixed input TL; 0 draws from native levels");
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--lr", o.lr);
  cmd->add_option("--beta1", o.beta1);
  cmd->add_option("--beta2", o.beta2);
  cmd->add_option("--eps", o.eps);
  cmd->add_option("--step-per-iteration", o.step_per_iteration,
                  "One optimizer update per iteration instead of per chain");
  cmd->add_option("--validate-every", o.validate_every);
  cmd->add_option("--checkpoint-every", o.checkpoint_every);
  cmd->add_option("--validation-iterations", o.validation_iterations);
  cmd->add_option("--base-channels", o.base_channels);
  cmd->add_option("--resblocks", o.resblocks, "ResBlocks per stage");
  cmd->add_option("--kernel", o.kernel, "Convolution kernel size");
  cmd->add_option("--width-mult", o.width_mult);
}

void add_train(CLI::App& app, TrainOptions& o, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("train", "Train with incremental temporal chains");
  cmd->add_option("--data", o.data, "Dataset root")->required();
  cmd->add_option("--out", o.out, "Run directory for checkpoints and the log")->required();
  cmd->add_option("--resume", o.resume, "Checkpoint to continue from");
  cmd->add_option("--log-every", o.log_every, "Print progress every N steps");
  add_train_flags(cmd, o);
  cmd->callback([&] {
    action = [&] {
      const auto manifest = read_dataset(o.data);
      auto train = load_split(o.data, manifest, Split::kTrain);
      auto val = load_split(o.data, manifest, Split::kVal);
      const fs::path dir(o.out);
      fs::create_directories(dir);

      std::unique_ptr<Trainer> trainer;
      if (!o.resume.empty()) {
        const auto ckpt = load_checkpoint(o.resume);
        TrainConfig base = ckpt.train.value_or(TrainConfig{});
        base.model = ckpt.params.config;
        trainer = std::make_unique<Trainer>(train_config(o, base), std::move(train),
                                            std::move(val), ckpt);
      } else {
        trainer = std::make_unique<Trainer>(train_config(o, TrainConfig{}), std::move(train),
                                            std::move(val));
      }
      const auto& config = trainer->config();
      out << "training " << param_count(trainer->params()) << " parameters from step "
          << trainer->step() << " to " << config.total_steps << "\n";

      std::ofstream log(dir / "train_log.ndjson", o.resume.empty() ? std::ios::trunc : std::ios::app);
      if (!log) throw IoError("cannot write " + (dir / "train_log.ndjson").string());
      auto save = [&](const Trainer& t) {
        const auto path = dir / ("ckpt_" + std::to_string(t.step()) + ".mtrnn");
        save_checkpoint(t.checkpoint(), path);
        out << "saved " << path.string() << "\n";
      };
      Trainer::Hooks hooks;
      hooks.on_step = [&](const StepRecord& r) {
        log << to_ndjson(r) << '\n' << std::flush;
        if (o.log_every > 0 && (r.step + 1) % o.log_every == 0) {
          out << "step " << r.step + 1 << " loss " << r.loss << " lr " << r.lr << "\n";
        }
      };
      hooks.on_validation = [&](const std::vector<ValidationRecord>& records) {
        for (const auto& r : records) {
          log << to_ndjson(r) << '\n';
          if (r.tl == 0 && r.iteration == config.total_iterations) {
            out << "validation step " << r.step << " iter " << r.iteration << " psnr "
                << format_db(r.psnr) << " l1 " << r.l1 << "\n";
          }
        }
        log << std::flush;
      };
      hooks.on_checkpoint = save;
      trainer->run(hooks);
      save_checkpoint(trainer->checkpoint(), dir / "final.mtrnn");
      out << "saved " << (dir / "final.mtrnn").string() << "\n";
    };
  });
}

// ---------------------------------------------------------------- infer

struct InferOptions {
  std::string ckpt, input, out;
  int iters = 6;
  bool emit_all = false;
  bool png8 = false;
  bool no_clamp = false;
};

void add_infer(CLI::App& app, InferOptions& o, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("infer", "Progressively deblur one image");
  cmd->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  cmd->add_option("--in", o.input, "Blurred PNG")->required();
  cmd->add_option("--out", o.out, "Output PNG, or directory with --emit-all")->required();
  cmd->add_option("--iters", o.iters, "Inference iterations")->check(CLI::PositiveNumber);
  cmd->add_flag("--emit-all", o.emit_all, "Write one PNG per iteration");
  cmd->add_flag("--png8", o.png8, "Write 8-bit PNGs for viewing");
  cmd->callback([&] {
    action = [&] {
      const auto params = load_checkpoint(o.ckpt).params;
      Image input = read_png(o.input);
      if (input.channels() == 1 && params.config.in_channels == 3) {
        std::vector<float> rgb;
        for (int c = 0; c < 3; ++c) rgb.insert(rgb.end(), input.data().begin(), input.data().end());
        input = Image(3, input.height(), input.width(), std::move(rgb));
      }
      const auto estimates = progressive_deblur(params, input, {o.iters, true});
      auto write = [&](const fs::path& path, const Image& img) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        o.png8 ? write_png8(path, img) : write_png16(path, img);
        out << "wrote " << path.string() << "\n";
      };
      if (o.emit_all) {
        const auto stem = fs::path(o.input).stem().string();
        for (std::size_t i = 0; i < estimates.size(); ++i) {
          write(fs::path(o.out) / (stem + "_iter" + std::to_string(i + 1) + ".png"), estimates[i]);
        }
      } else {
        write(o.out, estimates.back());
      }
    };
  });
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string ckpt, data, split = "test", out, emit_dir;
  std::optional<int> iters, report_iter, input_tl;
};

void add_eval(CLI::App& app, EvalOptions& o, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("eval", "Score progressive deblurring on a dataset split");
  cmd->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  cmd->add_option("--data", o.data, "Dataset root")->required();
  cmd->add_option("--split", o.split)->check(CLI::IsMember({"train", "val", "test"}));
  cmd->add_option("--iters", o.iters, "Iterations evaluated (default: training iterations + 2)");
  cmd->add_option("--report-iter", o.report_iter, "Iteration of the aggregate metrics");
  cmd->add_option("--input-tl", o.input_tl, "Evaluate from this TL instead of the native one");
  cmd->add_option("--out", o.out, "Report JSON path (default: stdout)");
  cmd->add_option("--emit-dir", o.emit_dir, "Write every estimate as a 16-bit PNG here");
  cmd->callback([&] {
    action = [&] {
      const auto ckpt = load_checkpoint(o.ckpt);
      const int trained = ckpt.train ? ckpt.train->total_iterations : 6;
      EvalConfig config;
      config.iterations = o.iters.value_or(trained + 2);
      config.report_iteration = o.report_iter.value_or(std::min(trained, config.iterations));
      config.input_tl = o.input_tl;
      const auto manifest = read_dataset(o.data);
      const auto scenes = load_split(o.data, manifest, parse_split(o.split));
      EstimateSink sink;
      if (!o.emit_dir.empty()) {
        sink = [&](const Scene& s, int iter, const Image& img) {
          const auto path =
              fs::path(o.emit_dir) / s.record.scene_id / ("iter_" + std::to_string(iter) + ".png");
          fs::create_directories(path.parent_path());
          write_png16(path, img);
        };
      }
      const auto report = evaluate(ckpt.params, scenes, config, sink);
      if (o.out.empty()) {
        out << report.to_json() << "\n";
      } else {
        write_text(o.out, report.to_json() + "\n");
        out << "evaluated " << report.per_image.size() << " images: PSNR " << format_db(report.psnr)
            << " dB, SSIM " << report.ssim << " at iteration " << config.report_iteration
            << " (input " << format_db(report.input_psnr) << " dB); report " << o.out << "\n";
      }
    };
  });
}

// ---------------------------------------------------------------- ablate

struct AblateOptions {
  std::string mode = "ss-vs-mt";
  std::string data;
  std::string out;
  SynthOptions synth;
  TrainOptions train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> levels{3, 5, 7};
  int mt_iters = 4;
  int mt_step = 2;
  int eval_iters = 8;
};

void add_ablate(CLI::App& app, AblateOptions& o, std::function<void()>& action, std::ostream& out) {
  auto* cmd = app.add_subcommand("ablate", "Desk-scale ablations (ss-vs-mt, tl-sweep)");
  cmd->add_option("--mode", o.mode)->check(CLI::IsMember({"ss-vs-mt", "tl-sweep"}));
  cmd->add_option("--data", o.data, "Dataset root; synthesized in memory when omitted");
  cmd->add_option("--out", o.out, "Report directory")->required();
  cmd->add_option("--seeds", o.seeds, "Training seeds")->delimiter(',');
  cmd->add_option("--levels", o.levels, "Input TLs of the sweep")->delimiter(',');
  cmd->add_option("--mt-iters", o.mt_iters, "Training iterations of the MT arm");
  cmd->add_option("--mt-step", o.mt_step, "Temporal step of the MT arm");
  cmd->add_option("--eval-iters", o.eval_iters, "Inference iterations evaluated for MT");
  cmd->add_option("--data-seed", o.synth.seed, "Seed of the synthesized dataset");
  cmd->add_option("--scenes", o.synth.scenes, "Synthesized scene count");
  auto* native = cmd->add_option("--native-tls", o.synth.native_tls,
                                 "Native TLs of synthesized scenes (ss-vs-mt default: "
                                 "1 + mt-step * mt-iters)")
                     ->delimiter(',');
  add_train_flags(cmd, o.train);
  cmd->callback([&] {
    action = [&] {
      std::vector<Scene> train, test;
      if (!o.data.empty()) {
        const auto manifest = read_dataset(o.data);
        train = load_split(o.data, manifest, Split::kTrain);
        test = load_split(o.data, manifest, Split::kTest);
      } else {
        if (o.mode == "ss-vs-mt" && native->count() == 0) {
          o.synth.native_tls = {1 + o.mt_step * o.mt_iters};
        }
        for (auto& s : synthesize_dataset(dataset_spec(o.synth))) {
          if (s.record.split == Split::kTrain) train.push_back(std::move(s));
          else if (s.record.split == Split::kTest) test.push_back(std::move(s));
        }
      }
      AblationSettings settings;
      settings.base = train_config(o.train, TrainConfig{});
      settings.seeds = o.seeds;
      settings.sweep_levels = o.levels;
      settings.mt_iterations = o.mt_iters;
      settings.mt_temporal_step = o.mt_step;
      settings.eval_iterations = o.eval_iters;
      auto progress = [&](const std::string& line) { out << line << "\n" << std::flush; };
      std::string md, js;
      if (o.mode == "ss-vs-mt") {
        const auto r = run_ss_vs_mt(settings, train, test, progress);
        md = r.markdown();
        js = r.json();
      } else {
        const auto r = run_tl_sweep(settings, train, test, progress);
        md = r.markdown();
        js = r.json();
      }
      write_text(fs::path(o.out) / (o.mode + ".json"), js + "\n");
      write_text(fs::path(o.out) / (o.mode + ".md"), md);
      out << md;
    };
  });
}

// ---------------------------------------------------------------- inspect

struct InspectOptions {
  std::string ckpt;
  bool json = false;
};

void add_inspect(CLI::App& app, InspectOptions& o, std::function<void()>& action,
                 std::ostream& out) {
  auto* cmd = app.add_subcommand("inspect-checkpoint", "Print a checkpoint summary");
  cmd->add_option("ckpt", o.ckpt, "Checkpoint file")->required();
  cmd->add_flag("--json", o.json, "Print the raw JSON header");
  cmd->callback([&] {
    action = [&] {
      if (o.json) {
        out << read_checkpoint_header(o.ckpt) << "\n";
        return;
      }
      const auto ckpt = load_checkpoint(o.ckpt);
      const auto& m = ckpt.params.config;
      out << "checkpoint " << o.ckpt << " (format " << Checkpoint::kFormatVersion << ")\n"
          << "model: base_channels " << m.base_channels << ", resblocks_per_stage "
          << m.resblocks_per_stage << ", kernel " << m.kernel_size << ", width_multiplier "
          << m.width_multiplier << "\n"
          << "parameters: " << param_count(ckpt.params) << "\n"
          << "step: " << ckpt.step << ", optimizer "
          << (ckpt.adam.first_moment.empty() ? std::string("absent")
                                             : "step " + std::to_string(ckpt.adam.step))
          << "\n";
      if (ckpt.train) out << "train config: " << to_json(*ckpt.train) << "\n";
      out << "\n";
      for (const auto& t : ckpt.params.tensors) {
        out << std::left << std::setw(28) << t.name << std::setw(18) << t.value.shape().str()
            << t.value.numel() << "\n";
      }
    };
  });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-temporal progressive deblurring", "mtdeblur"};
  app.require_subcommand(1);
  app.fallthrough();
  auto config = std::make_shared<JsonConfig>();
  app.config_formatter(config);
  app.set_config("--config", "", "JSON file whose keys mirror the long flags");

  std::function<void()> action;
  SynthOptions synth;
  TrainOptions train;
  InferOptions infer;
  EvalOptions eval;
  AblateOptions ablate;
  InspectOptions inspect;
  add_synth(app, synth, action, out);
  add_train(app, train, action, out);
  add_infer(app, infer, action, out);
  add_eval(app, eval, action, out);
  add_ablate(app, ablate, action, out);
  add_inspect(app, inspect, action, out);

  for (const auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    config->subcommands.push_back(sub->get_name());
  }
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (std::find(config->subcommands.begin(), config->subcommands.end(), arg) !=
        config->subcommands.end()) {
      config->section = arg;
      break;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (action) action();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mtdeblur::cli
