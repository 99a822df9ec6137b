#include "cameo/streaming.hpp"

#include <algorithm>
#include <fstream>

#include "cameo/errors.hpp"
#include "cameo/util.hpp"

namespace cameo {

const char* mode_name(StreamMode m) {
  switch (m) {
    case StreamMode::kNoMemory: return "no-memory";
    case StreamMode::kGtMemory: return "gt-memory";
    case StreamMode::kConfabulated: return "confabulated";
    case StreamMode::kCameo: return "confabulated+cameo";
  }
  return "?";
}

StreamMode parse_mode(const std::string& s) {
  if (s == "no-memory" || s == "none") return StreamMode::kNoMemory;
  if (s == "gt" || s == "gt-memory") return StreamMode::kGtMemory;
  if (s == "confab" || s == "confabulated") return StreamMode::kConfabulated;
  if (s == "cameo" || s == "confabulated+cameo") return StreamMode::kCameo;
  throw UsageError("unknown mode '" + s + "' (expected no-memory, gt, confab or cameo)");
}

namespace {

std::uint64_t step_seed(std::uint64_t seed, const std::string& episode_id, int n) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    util::crc32(episode_id), static_cast<std::uint32_t>(n)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

EpisodeRun stream_episode(const Model& model, const Episode& episode, const PersistentStore& store, StreamMode mode,
                          const StreamConfig& config, const Vocabulary& vocab, const ModificationPlan* plan) {
  const bool cameo_mode = mode == StreamMode::kCameo;
  if (cameo_mode && plan == nullptr) throw UsageError("confabulated+cameo mode needs a modification plan");
  if (!cameo_mode && plan != nullptr) throw UsageError("a modification plan is only valid in confabulated+cameo mode");
  if (plan) plan->validate_for(model.config());
  EntropyConfig entropy = config.entropy;
  if (plan) {
    entropy.tau = plan->tau;
    entropy.direction = plan->direction;
  }

  EpisodeRun run;
  run.episode_id = episode.id;
  std::vector<MemoryEntry> buffer;  // predictions (confabulated modes) or gold narrations (gt mode)
  const int m_event = model.config().m_event;
  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    const auto& step = episode.steps[i];
    const int n = static_cast<int>(i) + 1;
    try {
      MemorySet mem;
      if (mode != StreamMode::kNoMemory) {
        if (config.shots.n_long > 0) mem.long_term = store.retrieve_long_term(step.event, config.shots.n_long);
        mem.short_term = retrieve_short_term(buffer, config.shots.n_short);
      }
      const auto ctx = assemble_context(mem, step.event, m_event, static_cast<std::size_t>(model.config().max_context));
      StepRecord rec;
      rec.n = n;
      rec.reference = step.narration.text;
      for (const auto& e : mem.short_term) rec.short_term.push_back(e.narration.text);

      std::vector<Intervention> iv;
      if (cameo_mode) iv = cameo_interventions(ctx, *plan);
      rec.prediction = model.greedy_narration(ctx, vocab, config.max_len, iv);
      if (cameo_mode) {
        const auto est = estimate_uncertainty(model, ctx, vocab, entropy, step_seed(config.seed, episode.id, n), iv);
        rec.entropy = est.entropy;
        rec.credibility = est.credibility;
      }

      if (mode == StreamMode::kGtMemory) {
        update_short_term(buffer, step.event, step.narration);
      } else if (mode != StreamMode::kNoMemory) {
        update_short_term(buffer, step.event, rec.prediction, rec.credibility);
      }
      run.steps.push_back(std::move(rec));
    } catch (const Error& e) {
      run.failed = true;
      run.error = "event " + step.event.id + ": " + e.what();
      break;
    }
  }
  return run;
}

std::vector<EpisodeRun> stream_episodes(const Model& model, std::span<const Episode> episodes,
                                        const PersistentStore& store, StreamMode mode, const StreamConfig& config,
                                        const Vocabulary& vocab, const ModificationPlan* plan, int jobs) {
  std::vector<EpisodeRun> runs(episodes.size());
  util::parallel_for(episodes.size(), jobs, [&](std::size_t i) {
    runs[i] = stream_episode(model, episodes[i], store, mode, config, vocab, plan);
  });
  std::sort(runs.begin(), runs.end(), [](const EpisodeRun& a, const EpisodeRun& b) { return a.episode_id < b.episode_id; });
  return runs;
}

MetricReport evaluate_run(std::span<const std::string> predictions, std::span<const std::string> references,
                          const TfIdfStats& stats) {
  if (predictions.size() != references.size()) {
    throw LengthMismatch(std::to_string(predictions.size()) + " predictions for " + std::to_string(references.size()) +
                         " references");
  }
  MetricReport r;
  r.n = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto row = score_pair(predictions[i], references[i], stats);
    r.rows.push_back(row);
    r.mean.sts_proxy += row.sts_proxy;
    r.mean.rouge_l += row.rouge_l;
    r.mean.bleu += row.bleu;
  }
  if (r.n > 0) {
    const double inv = 1.0 / static_cast<double>(r.n);
    r.mean.sts_proxy *= inv;
    r.mean.rouge_l *= inv;
    r.mean.bleu *= inv;
  }
  return r;
}

MetricReport evaluate_run(std::span<const EpisodeRun> runs, const TfIdfStats& stats) {
  std::vector<std::string> pred, ref;
  for (const auto& run : runs) {
    for (const auto& s : run.steps) {
      pred.push_back(s.prediction.text);
      ref.push_back(s.reference);
    }
  }
  return evaluate_run(pred, ref, stats);
}

nlohmann::json run_summary(const MetricReport& report, std::span<const EpisodeRun> runs, const nlohmann::json& meta) {
  nlohmann::json j = meta;
  j["n_events"] = report.n;
  j["n_episodes"] = runs.size();
  std::size_t failed = 0;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& r : runs) {
    if (r.failed) {
      ++failed;
      failures.push_back({{"episode_id", r.episode_id}, {"error", r.error}});
    }
  }
  j["failed_episodes"] = failed;
  j["failures"] = failures;
  j["metrics"] = {{"sts_proxy", report.mean.sts_proxy}, {"rouge_l", report.mean.rouge_l}, {"bleu", report.mean.bleu}};
  return j;
}

void write_run(const std::filesystem::path& events_path, std::span<const EpisodeRun> runs, const MetricReport& report,
               const nlohmann::json& meta) {
  std::string out;
  std::size_t row = 0;
  for (const auto& run : runs) {
    for (const auto& s : run.steps) {
      nlohmann::json j = {{"episode_id", run.episode_id},
                          {"n", s.n},
                          {"prediction", s.prediction.text},
                          {"reference", s.reference}};
      j["entropy"] = s.entropy ? nlohmann::json(*s.entropy) : nlohmann::json(nullptr);
      j["credibility"] = s.credibility ? nlohmann::json(*s.credibility) : nlohmann::json(nullptr);
      const auto& m = report.rows.at(row++);
      j["sts_proxy"] = m.sts_proxy;
      j["rouge_l"] = m.rouge_l;
      j["bleu"] = m.bleu;
      out += j.dump() + "\n";
    }
  }
  util::write_file(events_path, out);
  auto summary_path = events_path;
  summary_path.replace_extension(".summary.json");
  util::write_file(summary_path, run_summary(report, runs, meta).dump(2) + "\n");
}

}  // namespace cameo
