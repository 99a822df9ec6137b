#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/model.hpp"
#include "cameo/uncertainty.hpp"

namespace cameo {

struct ModificationPlan {
  std::vector<AttentionHeadId> heads;
  double tau = 0.6;
  WeightDirection direction = WeightDirection::kDownweight;
  bool renormalize_rows = false;

  void validate() const;                          // throws PlanError
  void validate_for(const ModelConfig& config) const;  // also checks head ranges

  double weight_for(double entropy) const { return credibility_weight(entropy, tau, direction); }
};

void to_json(nlohmann::json& j, const ModificationPlan& p);
void from_json(const nlohmann::json& j, ModificationPlan& p);
void save_plan(const ModificationPlan& plan, const std::filesystem::path& path);
ModificationPlan load_plan(const std::filesystem::path& path);  // throws IoError, PlanError

// Per-position weights: a short-term narration segment carries its entry's
// credibility, every other position 1. A generated narration without a
// credibility value is a PlanError.
std::vector<double> token_weights(const ContextSequence& context);

std::vector<Intervention> cameo_interventions(const ContextSequence& context, const ModificationPlan& plan);

ForwardTrace<float> apply_cameo(const Model& model, const ContextSequence& context, const ModificationPlan& plan,
                                bool keep_attention = false);

}  // namespace cameo
