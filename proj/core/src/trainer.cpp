#include "mtdeblur/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <map>
#include <set>

#include "mtdeblur/checkpoint.hpp"
#include "mtdeblur/error.hpp"
#include "mtdeblur/hashing.hpp"
#include "mtdeblur/inference.hpp"
#include "mtdeblur/metrics.hpp"

namespace mtdeblur {
namespace {

using nlohmann::json;

constexpr std::uint64_t kModelSeedTag = 0x6d6f64656cULL;
constexpr std::uint64_t kDrawTag = 0xd7a3ULL;
constexpr std::uint64_t kAugmentTag = 0xa46dULL;

bool odd_level(int tl) { return tl >= 1 && tl <= kMaxTemporalLevel && tl % 2 == 1; }

}  // namespace

TemporalChain make_chain(int start_tl, int total_iterations, int floor_tl, int temporal_step) {
  if (!odd_level(start_tl) || start_tl < 3) {
    throw ArgumentError("start TL must be odd in 3.." + std::to_string(kMaxTemporalLevel) +
                        ", got " + std::to_string(start_tl));
  }
  if (floor_tl != 1 && floor_tl != 3 && floor_tl != 5) {
    throw ArgumentError("target floor TL must be 1, 3 or 5, got " + std::to_string(floor_tl));
  }
  if (floor_tl >= start_tl) {
    throw ArgumentError("start TL " + std::to_string(start_tl) + " does not exceed floor TL " +
                        std::to_string(floor_tl));
  }
  if (total_iterations < 1 || total_iterations > kMaxIterations) {
    throw ArgumentError("total iterations must be in 1.." + std::to_string(kMaxIterations));
  }
  if (temporal_step < 0 || temporal_step % 2 != 0) {
    throw ArgumentError("temporal step must be a non-negative even number");
  }
  TemporalChain chain{start_tl, {}};
  for (int i = 0; i < total_iterations; ++i) {
    const int t = temporal_step == 0 ? floor_tl : start_tl - temporal_step * (i + 1);
    chain.targets.push_back(std::max(t, floor_tl));
  }
  return chain;
}

int TrainConfig::effective_validation_iterations() const {
  return validation_iterations > 0 ? validation_iterations : total_iterations + 2;
}

void TrainConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (!(adam.lr > 0.0)) fail("lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) fail("epsilon must be positive");
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (halve_every <= 0) fail("halve_every must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (patch_size < 4 || patch_size % 4 != 0) fail("patch_size must be a positive multiple of 4");
  if (total_iterations < 1 || total_iterations > kMaxIterations) {
    fail("total_iterations must lie in 1.." + std::to_string(kMaxIterations));
  }
  if (temporal_step < 0 || temporal_step % 2 != 0) fail("temporal_step must be even and >= 0");
  if (target_floor_tl != 1 && target_floor_tl != 3 && target_floor_tl != 5) {
    fail("target_floor_tl must be 1, 3 or 5");
  }
  if (input_tl && (!odd_level(*input_tl) || *input_tl <= target_floor_tl)) {
    fail("input_tl must be an odd level above target_floor_tl");
  }
  if (validate_every < 0) fail("validate_every must be non-negative");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  if (validation_iterations < 0) fail("validation_iterations must be non-negative");
}

std::string to_json(const TrainConfig& c) {
  json j = {{"model",
             {{"base_channels", c.model.base_channels},
              {"resblocks_per_stage", c.model.resblocks_per_stage},
              {"kernel_size", c.model.kernel_size},
              {"in_channels", c.model.in_channels},
              {"width_multiplier", c.model.width_multiplier}}},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"epsilon", c.adam.epsilon},
            {"total_steps", c.total_steps},
            {"halve_every", c.halve_every},
            {"batch_size", c.batch_size},
            {"patch_size", c.patch_size},
            {"total_iterations", c.total_iterations},
            {"temporal_step", c.temporal_step},
            {"target_floor_tl", c.target_floor_tl},
            {"input_tl", c.input_tl ? json(*c.input_tl) : json()},
            {"seed", c.seed},
            {"step_per_iteration", c.step_per_iteration},
            {"validate_every", c.validate_every},
            {"checkpoint_every", c.checkpoint_every},
            {"validation_iterations", c.validation_iterations}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "model") {
        for (const auto& [mk, mv] : v.items()) {
          if (mk == "base_channels") c.model.base_channels = mv.get<int>();
          else if (mk == "resblocks_per_stage") c.model.resblocks_per_stage = mv.get<int>();
          else if (mk == "kernel_size") c.model.kernel_size = mv.get<int>();
          else if (mk == "in_channels") c.model.in_channels = mv.get<int>();
          else if (mk == "width_multiplier") c.model.width_multiplier = mv.get<double>();
          else throw ConfigError("unknown model config key '" + mk + "'");
        }
      } else if (key == "lr") c.adam.lr = v.get<double>();
      else if (key == "beta1") c.adam.beta1 = v.get<double>();
      else if (key == "beta2") c.adam.beta2 = v.get<double>();
      else if (key == "epsilon") c.adam.epsilon = v.get<double>();
      else if (key == "total_steps") c.total_steps = v.get<std::int64_t>();
      else if (key == "halve_every") c.halve_every = v.get<std::int64_t>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "patch_size") c.patch_size = v.get<int>();
      else if (key == "total_iterations") c.total_iterations = v.get<int>();
      else if (key == "temporal_step") c.temporal_step = v.get<int>();
      else if (key == "target_floor_tl") c.target_floor_tl = v.get<int>();
      else if (key == "input_tl") c.input_tl = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "step_per_iteration") c.step_per_iteration = v.get<bool>();
      else if (key == "validate_every") c.validate_every = v.get<std::int64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::int64_t>();
      else if (key == "validation_iterations") c.validation_iterations = v.get<int>();
      else throw ConfigError("unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config has a wrongly typed value: ") + e.what());
  }
  return c;
}

double lr_at(std::int64_t step, const TrainConfig& config) {
  if (config.halve_every <= 0) throw ConfigError("halve_every must be positive");
  return config.adam.lr * std::pow(0.5, static_cast<double>(step / config.halve_every));
}

std::string to_ndjson(const StepRecord& r) {
  return json{{"step", r.step},
              {"loss", r.loss},
              {"lr", r.lr},
              {"start_tl", r.start_tl},
              {"iter_losses", r.iter_losses},
              {"wall_ms", r.wall_ms}}
      .dump();
}

std::string to_ndjson(const ValidationRecord& r) {
  json psnr = std::isinf(r.psnr) ? json("inf") : json(r.psnr);
  return json{{"step", r.step}, {"tl", r.tl}, {"iter", r.iteration}, {"psnr", psnr}, {"l1", r.l1}}
      .dump();
}

void write_ndjson(std::ostream& out, const TrainLog& log) {
  for (const auto& r : log.steps) out << to_ndjson(r) << '\n';
  for (const auto& r : log.validation) out << to_ndjson(r) << '\n';
}

TrainLog read_ndjson(std::istream& in) {
  TrainLog log;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.contains("loss")) {
        log.steps.push_back({j.at("step").get<std::int64_t>(), j.at("loss").get<double>(),
                             j.at("lr").get<double>(), j.at("start_tl").get<int>(),
                             j.at("iter_losses").get<std::vector<double>>(),
                             j.at("wall_ms").get<double>()});
      } else {
        const auto& p = j.at("psnr");
        log.validation.push_back(
            {j.at("step").get<std::int64_t>(), j.at("tl").get<int>(), j.at("iter").get<int>(),
             p.is_string() ? INFINITY : p.get<double>(), j.value("l1", 0.0)});
      }
    } catch (const json::exception& e) {
      throw FormatError("train log line " + std::to_string(number) + ": " + e.what());
    }
  }
  return log;
}

double StepLosses::total() const {
  double s = 0.0;
  for (double v : iter_losses) s += v;
  return s;
}

std::vector<TensorF> iteration_gradients(const ModelParams<float>& params, const TensorF& blurred,
                                         const TensorF& previous,
                                         const RecurrentState<float>& state,
                                         const TensorF& target, float* loss) {
  Graph<float> graph;
  ParamVars vars = bind_params(graph, params);
  ForwardVars out = forward_graph(graph, params.config, vars, graph.constant(blurred),
                                  graph.constant(previous), graph.constant(state.f1),
                                  graph.constant(state.f2));
  Var l = graph.l1_loss(out.output, graph.constant(target));
  if (loss) *loss = graph.value(l)[0];
  auto grads = graph.backward(l);
  std::vector<TensorF> result;
  result.reserve(vars.vars.size());
  for (Var v : vars.vars) result.push_back(grads.take(v));
  return result;
}

StepLosses train_step(ModelParams<float>& params, AdamState<float>& adam,
                      const std::vector<TemporalLadder>& batch,
                      const std::vector<TemporalChain>& chains, bool step_per_iteration) {
  if (batch.empty() || batch.size() != chains.size()) {
    throw ArgumentError("train_step needs one chain per batch element");
  }
  const int iterations = chains.front().total_iterations();
  for (const auto& c : chains) {
    if (c.total_iterations() != iterations) throw ArgumentError("chains differ in length");
  }
  auto stack = [&](auto level_of) {
    std::vector<const Image*> images;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int tl = level_of(b);
      if (!batch[b].has(tl)) {
        throw ArgumentError("batch element " + std::to_string(b) + " lacks TL " +
                            std::to_string(tl));
      }
      images.push_back(&batch[b].at(tl));
    }
    return to_batch<float>(images);
  };

  const TensorF blurred = stack([&](std::size_t b) { return chains[b].start_tl; });
  TensorF previous = blurred;
  RecurrentState<float> state = init_recurrent_state<float>(params.config, blurred.shape());
  std::vector<TensorF> total;
  StepLosses losses;

  for (int i = 0; i < iterations; ++i) {
    const TensorF target = stack([&](std::size_t b) { return chains[b].targets[i]; });
    Graph<float> graph;
    ParamVars vars = bind_params(graph, params);
    ForwardVars out = forward_graph(graph, params.config, vars, graph.constant(blurred),
                                    graph.constant(previous), graph.constant(state.f1),
                                    graph.constant(state.f2));
    Var l = graph.l1_loss(out.output, graph.constant(target));
    const double loss = graph.value(l)[0];
    if (!std::isfinite(loss)) {
      throw NumericError("loss is not finite at iteration " + std::to_string(i + 1));
    }
    losses.iter_losses.push_back(loss);
    auto grads = graph.backward(l);
    std::vector<TensorF> g;
    g.reserve(vars.vars.size());
    for (Var v : vars.vars) g.push_back(grads.take(v));

    // Detach: later iterations see values only.
    previous = graph.value(out.output);
    state = {graph.value(out.f1), graph.value(out.f2)};

    if (step_per_iteration) {
      adam_step(params.tensors, g, adam);
    } else if (total.empty()) {
      total = std::move(g);
    } else {
      for (std::size_t k = 0; k < total.size(); ++k) {
        auto dst = total[k].data();
        auto src = g[k].data();
        for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
      }
    }
  }
  if (!step_per_iteration) adam_step(params.tensors, total, adam);
  return losses;
}

Trainer::Trainer(TrainConfig config, std::vector<Scene> train, std::vector<Scene> val)
    : config_(std::move(config)), train_(std::move(train)), val_(std::move(val)) {
  config_.validate();
  params_ = init_model<float>(config_.model, derive_seed({config_.seed, kModelSeedTag}));
  adam_ = make_adam_state(params_.tensors, config_.adam);
  prepare();
}

Trainer::Trainer(TrainConfig config, std::vector<Scene> train, std::vector<Scene> val,
                 const Checkpoint& resume)
    : config_(std::move(config)), train_(std::move(train)), val_(std::move(val)) {
  config_.model = resume.params.config;
  config_.validate();
  params_ = resume.params;
  adam_ = resume.adam.first_moment.empty() ? make_adam_state(params_.tensors, config_.adam)
                                           : resume.adam;
  step_ = resume.step;
  prepare();
}

void Trainer::prepare() {
  if (config_.total_steps > step_ && train_.empty()) {
    throw ArgumentError("training split is empty");
  }
  std::set<int> levels;
  for (const auto& s : train_) {
    if (s.ladder.images.empty()) throw ArgumentError("scene " + s.record.scene_id + " is empty");
    const int p = config_.patch_size;
    const Image& img = s.ladder.images.begin()->second;
    if (img.height() < p || img.width() < p) {
      throw ArgumentError("patch size " + std::to_string(p) + " exceeds scene " +
                          s.record.scene_id);
    }
    levels.insert(s.ladder.native_tl);
  }
  if (config_.input_tl) {
    const bool any = std::any_of(train_.begin(), train_.end(), [&](const Scene& s) {
      return s.ladder.native_tl >= *config_.input_tl;
    });
    if (!train_.empty() && !any) {
      throw ArgumentError("no training scene reaches input TL " + std::to_string(*config_.input_tl));
    }
    start_levels_ = {*config_.input_tl};
  } else {
    start_levels_.assign(levels.begin(), levels.end());
  }
}

Trainer::Draw Trainer::draw(std::int64_t step) const {
  Draw d;
  std::mt19937_64 rng(derive_seed({config_.seed, static_cast<std::uint64_t>(step), kDrawTag}));
  d.start_tl = start_levels_[std::uniform_int_distribution<std::size_t>(
      0, start_levels_.size() - 1)(rng)];
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < train_.size(); ++i) {
    if (train_[i].ladder.native_tl >= d.start_tl) eligible.push_back(i);
  }
  for (int b = 0; b < config_.batch_size; ++b) {
    std::mt19937_64 sample(
        derive_seed({config_.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)}));
    d.scenes.push_back(
        eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(sample)]);
  }
  return d;
}

StepRecord Trainer::train_one() {
  const auto start = std::chrono::steady_clock::now();
  const Draw d = draw(step_);
  const TemporalChain chain =
      make_chain(d.start_tl, config_.total_iterations, config_.target_floor_tl,
                 config_.temporal_step);

  std::vector<TemporalLadder> batch;
  for (int b = 0; b < config_.batch_size; ++b) {
    std::mt19937_64 sample(derive_seed({config_.seed, static_cast<std::uint64_t>(step_),
                                        static_cast<std::uint64_t>(b), kAugmentTag}));
    const TemporalLadder& full = train_[d.scenes[b]].ladder;
    TemporalLadder needed;
    needed.native_tl = chain.start_tl;
    needed.images.emplace(chain.start_tl, full.at(chain.start_tl));
    for (int t : chain.targets) needed.images.emplace(t, full.at(t));
    batch.push_back(augment(needed, sample, config_.patch_size));
  }

  adam_.hyper.lr = lr_at(step_, config_);
  StepLosses losses;
  try {
    losses = train_step(params_, adam_, batch, std::vector<TemporalChain>(batch.size(), chain),
                        config_.step_per_iteration);
  } catch (const NumericError& e) {
    throw NumericError("training diverged at step " + std::to_string(step_) + ": " + e.what());
  }

  StepRecord r;
  r.step = step_;
  r.loss = losses.total();
  r.lr = adam_.hyper.lr;
  r.start_tl = chain.start_tl;
  r.iter_losses = losses.iter_losses;
  r.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ++step_;
  return r;
}

std::vector<ValidationRecord> Trainer::validate() const {
  const int iterations = config_.effective_validation_iterations();
  InferenceConfig inference{iterations, true};
  std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& scene : val_) {
    const int tl = config_.input_tl.value_or(scene.ladder.native_tl);
    if (!scene.ladder.has(tl)) continue;
    const auto estimates = progressive_deblur(params_, scene.ladder.at(tl), inference);
    for (int i = 0; i < iterations; ++i) {
      const double p = psnr(estimates[i], scene.ladder.sharp());
      const double l = mean_abs_error(estimates[i], scene.ladder.sharp());
      for (int key : {tl, 0}) {
        cells[{key, i + 1}].first.push_back(p);
        cells[{key, i + 1}].second.push_back(l);
      }
    }
  }
  std::vector<ValidationRecord> out;
  for (const auto& [key, values] : cells) {
    out.push_back({step_, key.first, key.second, mean(values.first), mean(values.second)});
  }
  return out;
}

TrainLog Trainer::run(const Hooks& hooks) {
  TrainLog log;
  auto validate_now = [&] {
    auto records = validate();
    if (hooks.on_validation) hooks.on_validation(records);
    log.validation.insert(log.validation.end(), records.begin(), records.end());
  };
  if (config_.validate_every > 0 && step_ % config_.validate_every == 0) validate_now();
  while (step_ < config_.total_steps) {
    StepRecord r = train_one();
    if (hooks.on_step) hooks.on_step(r);
    log.steps.push_back(std::move(r));
    if (config_.validate_every > 0 &&
        (step_ % config_.validate_every == 0 || step_ == config_.total_steps)) {
      validate_now();
    }
    if (config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(*this);
    }
  }
  return log;
}

Checkpoint Trainer::checkpoint() const { return {params_, adam_, step_, config_}; }

}  // namespace mtdeblur
