#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/model.hpp"

namespace cameo {

enum class Equivalence { kExact, kTokenF1, kEmbeddingCosine };
enum class WeightDirection { kDownweight, kUpweight };

const char* equivalence_name(Equivalence e);
Equivalence parse_equivalence(const std::string& s);  // throws ConfigError
const char* direction_name(WeightDirection d);
WeightDirection parse_direction(const std::string& s);

struct EntropyConfig {
  int samples = 10;
  double temperature = 1.0;
  Equivalence equivalence = Equivalence::kExact;
  double theta = 0.8;  // threshold for the token-F1 and cosine predicates
  double tau = 0.6;
  WeightDirection direction = WeightDirection::kDownweight;
  int max_len = 8;

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const EntropyConfig& c);
void from_json(const nlohmann::json& j, EntropyConfig& c);

struct SemanticClustering {
  std::vector<Narration> samples;
  std::vector<int> assignment;       // sample -> cluster, numbered by first occurrence
  std::vector<double> cluster_probs;

  std::size_t num_clusters() const { return cluster_probs.size(); }
};

std::vector<Narration> sample_generations(const Model& model, const ContextSequence& context, const Vocabulary& vocab,
                                          const EntropyConfig& config, std::uint64_t seed,
                                          std::span<const Intervention> interventions = {});

// Token-multiset F1 and bag-of-words cosine between two narrations.
double token_f1(const Narration& a, const Narration& b);
double bag_cosine(const Narration& a, const Narration& b);
bool semantically_equivalent(const Narration& a, const Narration& b, const EntropyConfig& config);

// Connected components of the equivalence predicate.
SemanticClustering cluster_semantic(std::vector<Narration> samples, const EntropyConfig& config);

double semantic_entropy(std::span<const double> cluster_probs);
double semantic_entropy(const SemanticClustering& clustering);

// exp(-tau * se) when downweighting, exp(+tau * se) in upweight mode.
double credibility_weight(double se, double tau, WeightDirection direction);

struct UncertaintyEstimate {
  SemanticClustering clustering;
  double entropy = 0;
  double credibility = 1;
};

UncertaintyEstimate estimate_uncertainty(const Model& model, const ContextSequence& context, const Vocabulary& vocab,
                                         const EntropyConfig& config, std::uint64_t seed,
                                         std::span<const Intervention> interventions = {});

}  // namespace cameo
