#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/cameo.hpp"
#include "cameo/model.hpp"
#include "cameo/probing.hpp"
#include "cameo/streaming.hpp"
#include "cameo/training.hpp"
#include "cameo/world.hpp"

namespace cameo::cli {

// Defaults of the reference experiments; the world runs at higher frame noise.
inline WorldConfig default_world() {
  WorldConfig w;
  w.noise_sigma = 1.0;
  return w;
}

inline TrainConfig default_training() {
  TrainConfig t;
  t.epochs = 5;
  t.max_examples_per_epoch = 2000;
  t.shot_jitter = 0.25;
  return t;
}

struct DataConfig {
  int n_train = 300;
  int n_val = 40;
  int n_test = 14;
  WorldConfig world = default_world();
};

struct StreamSection {
  ShotConfig shots;
  int max_len = 8;
  std::string split = "test";
  EntropyConfig entropy;
  std::uint64_t seed = 0;
};

struct ProbeSection {
  int cases = 64;
  int top_k = 4;
  double tau = 0.6;
  WeightDirection direction = WeightDirection::kDownweight;
  bool renormalize_rows = false;
  Aggregation aggregation = Aggregation::kMean;
  std::string split = "val";
  std::uint64_t seed = 0;
};

/// Every tunable of the pipeline; each command reads the sections it needs.
struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train = default_training();
  StreamSection stream;
  ProbeSection probe;
  int jobs = 1;

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);  // missing keys keep their defaults

ExperimentConfig load_config(const std::filesystem::path& path);  // throws ConfigError

// Applies --seed to every stochastic component.
void apply_seed(ExperimentConfig& c, std::uint64_t seed);

Split parse_split(const std::string& s);  // throws UsageError

// Model config sized for the corpus (vocabulary and frame width).
ModelConfig model_config_for(const ExperimentConfig& c, const Corpus& corpus);

StreamConfig stream_config(const ExperimentConfig& c, ShotConfig shots);

// Splits a total shot budget like training does: N_s = round(total * ratio).
ShotConfig split_shots(int total, double short_term_ratio);
ShotConfig parse_shots(const std::string& text);  // "N_l,N_s"; throws UsageError

// Aggregates run summaries into comparison tables. Throws UsageError when the
// runs come from different corpora.
nlohmann::json build_report(const std::vector<nlohmann::json>& summaries);
std::string report_text(const nlohmann::json& report);

// Entry point; returns the process exit code (0 ok, 2 usage/config, 3 runtime).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cameo::cli
