#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/cameo.hpp"
#include "cameo/memory.hpp"
#include "cameo/metrics.hpp"
#include "cameo/model.hpp"
#include "cameo/uncertainty.hpp"

namespace cameo {

enum class StreamMode { kNoMemory, kGtMemory, kConfabulated, kCameo };

const char* mode_name(StreamMode m);
StreamMode parse_mode(const std::string& s);  // accepts "gt"/"gt-memory", "confab"/"confabulated", ...

struct StreamConfig {
  ShotConfig shots;
  int max_len = 8;
  EntropyConfig entropy;  // used in cameo mode; tau and direction come from the plan
  std::uint64_t seed = 0;
};

struct StepRecord {
  int n = 0;  // 1-based event index
  Narration prediction;
  std::string reference;
  std::optional<double> entropy;
  std::optional<double> credibility;
  // Narration texts of the short-term entries in this step's context, oldest first.
  std::vector<std::string> short_term;
};

struct EpisodeRun {
  std::string episode_id;
  std::vector<StepRecord> steps;
  bool failed = false;  // steps holds the events completed before the failure
  std::string error;
};

EpisodeRun stream_episode(const Model& model, const Episode& episode, const PersistentStore& store, StreamMode mode,
                          const StreamConfig& config, const Vocabulary& vocab,
                          const ModificationPlan* plan = nullptr);

// Streams every episode (in parallel when jobs > 1); result sorted by episode id.
std::vector<EpisodeRun> stream_episodes(const Model& model, std::span<const Episode> episodes,
                                        const PersistentStore& store, StreamMode mode, const StreamConfig& config,
                                        const Vocabulary& vocab, const ModificationPlan* plan = nullptr, int jobs = 1);

struct MetricReport {
  MetricRow mean;
  std::vector<MetricRow> rows;
  std::size_t n = 0;
};

MetricReport evaluate_run(std::span<const std::string> predictions, std::span<const std::string> references,
                          const TfIdfStats& stats);  // throws LengthMismatch
MetricReport evaluate_run(std::span<const EpisodeRun> runs, const TfIdfStats& stats);

// One JSON line per event, and a summary {mode, shots, n_events, metrics, ...}.
void write_run(const std::filesystem::path& events_path, std::span<const EpisodeRun> runs, const MetricReport& report,
               const nlohmann::json& meta);
nlohmann::json run_summary(const MetricReport& report, std::span<const EpisodeRun> runs, const nlohmann::json& meta);

}  // namespace cameo
