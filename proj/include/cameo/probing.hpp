#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/memory.hpp"
#include "cameo/model.hpp"

namespace cameo {

/// A validation event whose gold short-term memory has one narration swapped
/// for a narration from a different episode.
struct ProbeCase {
  std::string event_id;
  ContextSequence clean;
  ContextSequence corrupted;
  Narration gold;
  int corrupted_entry = 0;  // index into the short-term entries
  std::string original_text;
  std::string replacement_text;
};

// Events with at least one short-term entry are eligible; cases are drawn
// without replacement (all eligible events when n_cases exceeds them). Throws
// ProbeSetupError when nothing is eligible.
std::vector<ProbeCase> make_probe_cases(std::span<const Episode> episodes, const PersistentStore& store,
                                        const ShotConfig& shots, int m_event, int n_cases, std::uint64_t seed);

// Rebuilds `cases[i].corrupted` style contexts: swaps short-term entry
// `entry` of `memory` for `replacement` and re-assembles.
ContextSequence corrupt_context(const MemorySet& memory, const Event& query, int m_event, int entry,
                                const Narration& replacement);

// logp(gold | corrupted, head ablated) - logp(gold | corrupted).
double indirect_effect(const Model& model, const ProbeCase& probe, AttentionHeadId head);

enum class Aggregation { kMean, kMedian };

struct ProbeResult {
  int n_layers = 0;
  int n_heads = 0;
  std::vector<double> ie;                   // aggregated, index layer * n_heads + head
  std::vector<std::vector<double>> per_case;  // [case][layer * n_heads + head]
  std::vector<std::string> case_ids;
  Aggregation aggregation = Aggregation::kMean;

  double at(AttentionHeadId h) const { return ie.at(static_cast<std::size_t>(h.layer * n_heads + h.head)); }
  std::size_t n_cases() const { return per_case.size(); }
};

// L * H + 1 forward passes per case: one unablated baseline plus one pass
// per ablated head.
ProbeResult probe_heads(const Model& model, std::span<const ProbeCase> cases,
                        Aggregation aggregation = Aggregation::kMean, int jobs = 1);

// The k heads with the largest aggregated IE; ties go to the smaller
// (layer, head). Throws OutOfRange unless 1 <= k <= L * H.
std::vector<AttentionHeadId> select_top_k(const ProbeResult& result, int k);

nlohmann::json probe_report(const ProbeResult& result, std::span<const AttentionHeadId> top_k,
                            const nlohmann::json& config);
std::string probe_matrix_csv(const ProbeResult& result);  // L rows x H columns

}  // namespace cameo
