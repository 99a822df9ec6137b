#include "cameo/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cameo/errors.hpp"

namespace cameo {

const char* equivalence_name(Equivalence e) {
  switch (e) {
    case Equivalence::kExact: return "exact";
    case Equivalence::kTokenF1: return "token-f1";
    case Equivalence::kEmbeddingCosine: return "embedding-cosine";
  }
  return "?";
}

Equivalence parse_equivalence(const std::string& s) {
  if (s == "exact") return Equivalence::kExact;
  if (s == "token-f1") return Equivalence::kTokenF1;
  if (s == "embedding-cosine") return Equivalence::kEmbeddingCosine;
  throw ConfigError("unknown equivalence '" + s + "' (expected exact, token-f1 or embedding-cosine)");
}

const char* direction_name(WeightDirection d) {
  return d == WeightDirection::kDownweight ? "downweight" : "upweight";
}

WeightDirection parse_direction(const std::string& s) {
  if (s == "downweight") return WeightDirection::kDownweight;
  if (s == "upweight") return WeightDirection::kUpweight;
  throw ConfigError("unknown weight direction '" + s + "' (expected downweight or upweight)");
}

void EntropyConfig::validate() const {
  if (samples < 2) throw ConfigError("entropy config: samples must be >= 2");
  if (!(temperature > 0)) throw ConfigError("entropy config: temperature must be > 0");
  if (!(theta > 0 && theta <= 1)) throw ConfigError("entropy config: theta must lie in (0, 1]");
  if (!(tau >= 0)) throw ConfigError("entropy config: tau must be >= 0");
  if (max_len < 1) throw ConfigError("entropy config: max_len must be >= 1");
}

void to_json(nlohmann::json& j, const EntropyConfig& c) {
  j = {{"samples", c.samples},   {"temperature", c.temperature},
       {"equivalence", equivalence_name(c.equivalence)},
       {"theta", c.theta},       {"tau", c.tau},
       {"direction", direction_name(c.direction)},
       {"max_len", c.max_len}};
}

void from_json(const nlohmann::json& j, EntropyConfig& c) {
  const EntropyConfig d;
  c.samples = j.value("samples", d.samples);
  c.temperature = j.value("temperature", d.temperature);
  c.equivalence = parse_equivalence(j.value("equivalence", std::string(equivalence_name(d.equivalence))));
  c.theta = j.value("theta", d.theta);
  c.tau = j.value("tau", d.tau);
  c.direction = parse_direction(j.value("direction", std::string(direction_name(d.direction))));
  c.max_len = j.value("max_len", d.max_len);
}

std::vector<Narration> sample_generations(const Model& model, const ContextSequence& context, const Vocabulary& vocab,
                                          const EntropyConfig& config, std::uint64_t seed,
                                          std::span<const Intervention> interventions) {
  config.validate();
  return model.sample_narrations(context, vocab, config.samples, config.temperature, seed, config.max_len,
                                 interventions);
}

namespace {

std::map<TokenId, int> bag(const Narration& n) {
  std::map<TokenId, int> out;
  for (TokenId id : n.token_ids) ++out[id];
  return out;
}

}  // namespace

double token_f1(const Narration& a, const Narration& b) {
  if (a.token_ids.empty() && b.token_ids.empty()) return 1.0;
  if (a.token_ids.empty() || b.token_ids.empty()) return 0.0;
  const auto ba = bag(a);
  const auto bb = bag(b);
  int overlap = 0;
  for (const auto& [id, n] : ba) {
    auto it = bb.find(id);
    if (it != bb.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(a.token_ids.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(b.token_ids.size());
  return 2 * p * r / (p + r);
}

double bag_cosine(const Narration& a, const Narration& b) {
  if (a.token_ids.empty() && b.token_ids.empty()) return 1.0;
  if (a.token_ids.empty() || b.token_ids.empty()) return 0.0;
  const auto ba = bag(a);
  const auto bb = bag(b);
  double dot = 0, na = 0, nb = 0;
  for (const auto& [id, n] : ba) {
    na += static_cast<double>(n) * n;
    auto it = bb.find(id);
    if (it != bb.end()) dot += static_cast<double>(n) * it->second;
  }
  for (const auto& [id, n] : bb) nb += static_cast<double>(n) * n;
  return dot / std::sqrt(na * nb);
}

bool semantically_equivalent(const Narration& a, const Narration& b, const EntropyConfig& config) {
  switch (config.equivalence) {
    case Equivalence::kExact: return a.token_ids == b.token_ids;
    case Equivalence::kTokenF1: return token_f1(a, b) >= config.theta;
    case Equivalence::kEmbeddingCosine: return bag_cosine(a, b) >= config.theta;
  }
  return false;
}

SemanticClustering cluster_semantic(std::vector<Narration> samples, const EntropyConfig& config) {
  if (samples.empty()) throw InvalidArgument("cluster_semantic needs at least one sample");
  const std::size_t n = samples.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (find(i) != find(j) && semantically_equivalent(samples[i], samples[j], config)) {
        parent[std::max(find(i), find(j))] = std::min(find(i), find(j));
      }
    }
  }
  SemanticClustering out;
  std::map<std::size_t, int> label;
  std::vector<int> sizes;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = label.emplace(find(i), static_cast<int>(sizes.size()));
    if (inserted) sizes.push_back(0);
    ++sizes[static_cast<std::size_t>(it->second)];
    out.assignment.push_back(it->second);
  }
  for (int s : sizes) out.cluster_probs.push_back(static_cast<double>(s) / static_cast<double>(n));
  out.samples = std::move(samples);
  return out;
}

double semantic_entropy(std::span<const double> cluster_probs) {
  double h = 0;
  for (double p : cluster_probs) {
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

double semantic_entropy(const SemanticClustering& clustering) { return semantic_entropy(clustering.cluster_probs); }

double credibility_weight(double se, double tau, WeightDirection direction) {
  if (se < 0 || tau < 0) throw InvalidArgument("credibility_weight needs se >= 0 and tau >= 0");
  return direction == WeightDirection::kDownweight ? std::exp(-tau * se) : std::exp(tau * se);
}

UncertaintyEstimate estimate_uncertainty(const Model& model, const ContextSequence& context, const Vocabulary& vocab,
                                         const EntropyConfig& config, std::uint64_t seed,
                                         std::span<const Intervention> interventions) {
  UncertaintyEstimate est;
  est.clustering = cluster_semantic(sample_generations(model, context, vocab, config, seed, interventions), config);
  est.entropy = semantic_entropy(est.clustering);
  est.credibility = credibility_weight(est.entropy, config.tau, config.direction);
  return est;
}

}  // namespace cameo
