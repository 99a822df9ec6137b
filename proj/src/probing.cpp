#include "cameo/probing.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "cameo/errors.hpp"
#include "cameo/util.hpp"

namespace cameo {

ContextSequence corrupt_context(const MemorySet& memory, const Event& query, int m_event, int entry,
                                const Narration& replacement) {
  if (entry < 0 || entry >= static_cast<int>(memory.short_term.size())) {
    throw OutOfRange("corrupted entry " + std::to_string(entry) + " outside the short-term memory");
  }
  MemorySet copy = memory;
  copy.short_term[static_cast<std::size_t>(entry)].narration = replacement;
  return assemble_context(copy, query, m_event);
}

std::vector<ProbeCase> make_probe_cases(std::span<const Episode> episodes, const PersistentStore& store,
                                        const ShotConfig& shots, int m_event, int n_cases, std::uint64_t seed) {
  if (n_cases < 1) throw ProbeSetupError("probing needs at least one case");
  if (shots.n_short < 1) throw ProbeSetupError("probing needs a short-term memory budget of at least one entry");
  struct Ref {
    std::size_t episode;
    std::size_t index;  // 0-based event index, >= 1
  };
  std::vector<Ref> eligible;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (std::size_t i = 1; i < episodes[e].steps.size(); ++i) eligible.push_back({e, i});
  }
  if (eligible.empty()) throw ProbeSetupError("no event has a short-term memory entry");
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (episode, step) of every narration
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (std::size_t i = 0; i < episodes[e].steps.size(); ++i) pool.emplace_back(e, i);
  }

  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(std::min(eligible.size(), static_cast<std::size_t>(n_cases)));

  std::vector<ProbeCase> cases;
  for (const auto& ref : eligible) {
    const auto& ep = episodes[ref.episode];
    const auto& step = ep.steps[ref.index];
    MemorySet mem;
    if (shots.n_long > 0) mem.long_term = store.retrieve_long_term(step.event, shots.n_long);
    const std::size_t first = ref.index > static_cast<std::size_t>(shots.n_short) ? ref.index - shots.n_short : 0;
    for (std::size_t i = first; i < ref.index; ++i) {
      update_short_term(mem.short_term, ep.steps[i].event, ep.steps[i].narration);
    }
    ProbeCase pc;
    pc.event_id = step.event.id;
    pc.gold = step.narration;
    pc.corrupted_entry =
        std::uniform_int_distribution<int>(0, static_cast<int>(mem.short_term.size()) - 1)(rng);
    pc.original_text = mem.short_term[static_cast<std::size_t>(pc.corrupted_entry)].narration.text;
    // Uniform over other episodes' narrations, rejecting the original string.
    const Narration* replacement = nullptr;
    for (int attempt = 0; attempt < 10000 && replacement == nullptr; ++attempt) {
      const auto& [pe, pi] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      if (pe == ref.episode) continue;
      const auto& cand = episodes[pe].steps[pi].narration;
      if (cand.text != pc.original_text) replacement = &cand;
    }
    if (replacement == nullptr) {
      throw ProbeSetupError("no replacement narration differs from '" + pc.original_text + "'");
    }
    pc.replacement_text = replacement->text;
    pc.clean = assemble_context(mem, step.event, m_event);
    pc.corrupted = corrupt_context(mem, step.event, m_event, pc.corrupted_entry, *replacement);
    cases.push_back(std::move(pc));
  }
  return cases;
}

double indirect_effect(const Model& model, const ProbeCase& probe, AttentionHeadId head) {
  const Intervention iv[] = {Intervention::ablate(head)};
  return model.narration_logprob(probe.corrupted, probe.gold, iv) - model.narration_logprob(probe.corrupted, probe.gold);
}

ProbeResult probe_heads(const Model& model, std::span<const ProbeCase> cases, Aggregation aggregation, int jobs) {
  if (cases.empty()) throw ProbeSetupError("probe_heads needs at least one case");
  const auto& cfg = model.config();
  const int total = cfg.num_heads_total();
  ProbeResult r;
  r.n_layers = cfg.n_layers;
  r.n_heads = cfg.n_heads;
  r.aggregation = aggregation;
  r.per_case.assign(cases.size(), std::vector<double>(static_cast<std::size_t>(total), 0.0));
  std::vector<double> baseline(cases.size());
  util::parallel_for(cases.size(), jobs, [&](std::size_t c) {
    baseline[c] = model.narration_logprob(cases[c].corrupted, cases[c].gold);
  });
  util::parallel_for(cases.size() * static_cast<std::size_t>(total), jobs, [&](std::size_t job) {
    const std::size_t c = job / static_cast<std::size_t>(total);
    const int h = static_cast<int>(job % static_cast<std::size_t>(total));
    const Intervention iv[] = {Intervention::ablate({h / cfg.n_heads, h % cfg.n_heads})};
    r.per_case[c][static_cast<std::size_t>(h)] = model.narration_logprob(cases[c].corrupted, cases[c].gold, iv) - baseline[c];
  });
  for (const auto& pc : cases) r.case_ids.push_back(pc.event_id);
  r.ie.assign(static_cast<std::size_t>(total), 0.0);
  for (int h = 0; h < total; ++h) {
    std::vector<double> vals;
    for (const auto& row : r.per_case) vals.push_back(row[static_cast<std::size_t>(h)]);
    if (aggregation == Aggregation::kMean) {
      r.ie[static_cast<std::size_t>(h)] = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    } else {
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size() / 2;
      r.ie[static_cast<std::size_t>(h)] = vals.size() % 2 ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
    }
  }
  return r;
}

std::vector<AttentionHeadId> select_top_k(const ProbeResult& result, int k) {
  const int total = result.n_layers * result.n_heads;
  if (k < 1 || k > total) {
    throw OutOfRange("top-k of " + std::to_string(k) + " outside [1, " + std::to_string(total) + "]");
  }
  std::vector<int> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return result.ie[static_cast<std::size_t>(a)] > result.ie[static_cast<std::size_t>(b)];
  });
  std::vector<AttentionHeadId> out;
  for (int i = 0; i < k; ++i) out.push_back({idx[static_cast<std::size_t>(i)] / result.n_heads, idx[static_cast<std::size_t>(i)] % result.n_heads});
  return out;
}

nlohmann::json probe_report(const ProbeResult& result, std::span<const AttentionHeadId> top_k,
                            const nlohmann::json& config) {
  nlohmann::json matrix = nlohmann::json::array();
  for (int l = 0; l < result.n_layers; ++l) {
    nlohmann::json row = nlohmann::json::array();
    for (int h = 0; h < result.n_heads; ++h) row.push_back(result.at({l, h}));
    matrix.push_back(row);
  }
  nlohmann::json per_case = nlohmann::json::array();
  for (std::size_t c = 0; c < result.per_case.size(); ++c) {
    per_case.push_back({{"event_id", result.case_ids.at(c)}, {"ie", result.per_case[c]}});
  }
  return {{"config", config},
          {"conventions",
           {{"ie", "logp(gold | corrupted, head ablated) - logp(gold | corrupted)"},
            {"space", "log-probability, nats"},
            {"aggregation", result.aggregation == Aggregation::kMean ? "mean" : "median"}}},
          {"n_cases", result.n_cases()},
          {"matrix", matrix},
          {"top_k", std::vector<AttentionHeadId>(top_k.begin(), top_k.end())},
          {"per_case", per_case}};
}

std::string probe_matrix_csv(const ProbeResult& result) {
  std::ostringstream os;
  os.precision(17);
  for (int l = 0; l < result.n_layers; ++l) {
    for (int h = 0; h < result.n_heads; ++h) {
      if (h) os << ',';
      os << result.at({l, h});
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cameo
