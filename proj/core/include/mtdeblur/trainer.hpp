#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mtdeblur/adam.hpp"
#include "mtdeblur/dataset.hpp"
#include "mtdeblur/model.hpp"

namespace mtdeblur {

inline constexpr int kMaxIterations = 7;

/// Targets of one sample across the recurrent iterations.
struct TemporalChain {
  int start_tl = 0;
  std::vector<int> targets;

  int total_iterations() const { return static_cast<int>(targets.size()); }
  friend bool operator==(const TemporalChain&, const TemporalChain&) = default;
};

/// targets[i] = max(start_tl - temporal_step * (i + 1), floor_tl). A
/// temporal step of 0 targets floor_tl at every iteration (single-step
/// training). start_tl must be odd in 3..13 and above floor_tl, floor_tl
/// one of 1, 3, 5 and total_iterations in 1..7.
TemporalChain make_chain(int start_tl, int total_iterations, int floor_tl = 1,
                         int temporal_step = 2);

struct TrainConfig {
  ModelConfig model;
  AdamHyperParams adam;
  std::int64_t total_steps = 4000;
  std::int64_t halve_every = 2000;
  int batch_size = 4;
  int patch_size = 64;
  int total_iterations = 6;
  int temporal_step = 2;
  int target_floor_tl = 1;
  /// Fixed input temporal level; unset draws a start level per step.
  std::optional<int> input_tl;
  std::uint64_t seed = 0;
  /// One optimizer update per iteration instead of one per chain.
  bool step_per_iteration = false;
  /// 0 disables periodic validation / checkpoints.
  std::int64_t validate_every = 0;
  std::int64_t checkpoint_every = 0;
  /// Inference iterations used by validation; 0 means total_iterations + 2.
  int validation_iterations = 0;

  int effective_validation_iterations() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

/// base_lr * 0.5^floor(step / halve_every).
double lr_at(std::int64_t step, const TrainConfig& config);

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  int start_tl = 0;
  std::vector<double> iter_losses;
  double wall_ms = 0.0;
};

struct ValidationRecord {
  std::int64_t step = 0;
  /// Input temporal level; 0 pools every level.
  int tl = 0;
  int iteration = 0;
  double psnr = 0.0;
  /// Mean absolute error against the sharp frame.
  double l1 = 0.0;
};

/// Append-only training history, serialized as newline-delimited JSON.
struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validation;
};

std::string to_ndjson(const StepRecord& record);
std::string to_ndjson(const ValidationRecord& record);
void write_ndjson(std::ostream& out, const TrainLog& log);
TrainLog read_ndjson(std::istream& in);

/// Losses of one train_step, in iteration order.
struct StepLosses {
  std::vector<double> iter_losses;
  double total() const;
};

/// One incremental temporal training step on a batch of aligned ladders.
/// Each element starts from ladder.at(chain.start_tl); iteration i is
/// trained against ladder.at(chain.targets[i]). The estimate and the
/// recurrent maps are detached between iterations, per-iteration gradients
/// are summed and applied with a single Adam update (or one update per
/// iteration when step_per_iteration is set). All chains must have the
/// same length. The learning rate is taken from adam.hyper.lr.
StepLosses train_step(ModelParams<float>& params, AdamState<float>& adam,
                      const std::vector<TemporalLadder>& batch,
                      const std::vector<TemporalChain>& chains, bool step_per_iteration = false);

/// Parameter gradients of one iteration, given the detached inputs of
/// that iteration. Exposed for gradient inspection.
std::vector<TensorF> iteration_gradients(const ModelParams<float>& params, const TensorF& blurred,
                                         const TensorF& previous,
                                         const RecurrentState<float>& state,
                                         const TensorF& target, float* loss = nullptr);

struct Checkpoint;

class Trainer {
 public:
  /// Fresh model initialized from config.seed.
  Trainer(TrainConfig config, std::vector<Scene> train, std::vector<Scene> val);
  /// Continues from a checkpoint; the model configuration is taken from it.
  Trainer(TrainConfig config, std::vector<Scene> train, std::vector<Scene> val,
          const Checkpoint& resume);

  /// Runs the step with index step(); step() then increases by one.
  StepRecord train_one();
  /// Validation of the current parameters over the val scenes.
  std::vector<ValidationRecord> validate() const;

  using StepCallback = std::function<void(const StepRecord&)>;
  using ValidationCallback = std::function<void(const std::vector<ValidationRecord>&)>;
  using CheckpointCallback = std::function<void(const Trainer&)>;
  struct Hooks {
    StepCallback on_step;
    ValidationCallback on_validation;
    CheckpointCallback on_checkpoint;
  };
  /// Trains until step() == config.total_steps, validating and
  /// checkpointing every configured interval (including step 0 and the
  /// final step for validation). Returns the accumulated log.
  TrainLog run(const Hooks& hooks = {});

  std::int64_t step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const ModelParams<float>& params() const { return params_; }
  const AdamState<float>& adam() const { return adam_; }
  Checkpoint checkpoint() const;

  /// Start level and scene indices drawn for a step; depends only on
  /// (seed, step).
  struct Draw {
    int start_tl = 0;
    std::vector<std::size_t> scenes;
  };
  Draw draw(std::int64_t step) const;

 private:
  TrainConfig config_;
  std::vector<Scene> train_;
  std::vector<Scene> val_;
  std::vector<int> start_levels_;
  ModelParams<float> params_;
  AdamState<float> adam_;
  std::int64_t step_ = 0;

  void prepare();
};

}  // namespace mtdeblur
