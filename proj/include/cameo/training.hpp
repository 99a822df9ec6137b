#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/memory.hpp"
#include "cameo/model.hpp"
#include "cameo/world.hpp"

namespace cameo {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  int total_shots = 16;
  double short_term_ratio = 0.5;  // N_s = round(total_shots * ratio)
  int epochs = 8;
  double learning_rate = 1e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double grad_clip = 1.0;          // global L2 norm; 0 disables
  double warmup_fraction = 0.05;   // linear warmup, then cosine decay to 10%
  double weight_decay = 0.0;       // decoupled, Adam only
  int max_examples_per_epoch = 0;  // 0 = every event of every training episode
  int val_examples = 256;          // 0 disables validation loss
  // Probability that an example draws its shot counts uniformly from
  // [0, N_l] x [0, N_s] instead of using the full budget.
  double shot_jitter = 0.0;
  int jobs = 1;

  ShotConfig shots() const;
  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Context followed by the target words and narration-end; the loss mask
/// selects the |target| + 1 positions that predict them.
struct TrainingExample {
  ContextSequence sequence;
  std::vector<std::uint8_t> loss_mask;
  Narration target;
  std::size_t context_length = 0;
};

// Event n (1-based) of the episode with gold short-term memory drawn from
// the min(n_short, n - 1) preceding events.
TrainingExample build_training_example(const Episode& episode, int n, std::vector<MemoryEntry> long_term, int n_short,
                                       int m_event);
TrainingExample build_training_example(const Episode& episode, int n, const PersistentStore& store,
                                       const ShotConfig& shots, int m_event);

// Masked mean cross-entropy, forward only.
double example_loss(const Model& model, const TrainingExample& example);

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::size_t n_params);
  void step(std::span<float> params, std::span<const float> grad, double lr);

 private:
  OptimizerKind kind_;
  double weight_decay_;
  std::vector<float> m_, v_;
  std::uint64_t t_ = 0;
};

double learning_rate_at(const TrainConfig& config, std::uint64_t step, std::uint64_t total_steps);

// One optimizer step over `batch`; returns the mean example loss before the
// update. Throws TrainingDiverged on a non-finite loss or gradient.
double train_batch(Model& model, Optimizer& optimizer, std::span<const TrainingExample* const> batch,
                   const TrainConfig& config, double lr, std::uint64_t step);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double initial_val_loss = 0;  // before the first update, when validation is on
};

struct TrainHooks {
  std::optional<std::filesystem::path> metrics_log;  // JSON-lines, one record per epoch
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Trains `model` in place on the corpus train split.
TrainResult train(const Corpus& corpus, Model& model, const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace cameo
