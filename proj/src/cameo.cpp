#include "cameo/cameo.hpp"

#include <set>

#include "cameo/errors.hpp"
#include "cameo/util.hpp"

namespace cameo {

void ModificationPlan::validate() const {
  if (heads.empty()) throw PlanError("modification plan has no heads");
  if (!(tau >= 0)) throw PlanError("modification plan tau must be >= 0");
  std::set<AttentionHeadId> seen(heads.begin(), heads.end());
  if (seen.size() != heads.size()) throw PlanError("modification plan lists a head twice");
}

void ModificationPlan::validate_for(const ModelConfig& config) const {
  validate();
  for (const auto& h : heads) {
    if (h.layer < 0 || h.layer >= config.n_layers || h.head < 0 || h.head >= config.n_heads) {
      throw PlanError("plan head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                      ") is outside the model");
    }
  }
}

void to_json(nlohmann::json& j, const ModificationPlan& p) {
  j = {{"heads", p.heads},
       {"tau", p.tau},
       {"direction", direction_name(p.direction)},
       {"renormalize_rows", p.renormalize_rows}};
}

void from_json(const nlohmann::json& j, ModificationPlan& p) {
  try {
    p.heads = j.at("heads").get<std::vector<AttentionHeadId>>();
    p.tau = j.value("tau", 0.6);
    p.direction = parse_direction(j.value("direction", std::string("downweight")));
    p.renormalize_rows = j.value("renormalize_rows", false);
  } catch (const nlohmann::json::exception& e) {
    throw PlanError(std::string("malformed modification plan: ") + e.what());
  }
}

void save_plan(const ModificationPlan& plan, const std::filesystem::path& path) {
  plan.validate();
  util::write_file(path, nlohmann::json(plan).dump(2) + "\n");
}

ModificationPlan load_plan(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw PlanError(path.string() + ": " + e.what());
  }
  auto plan = j.get<ModificationPlan>();
  plan.validate();
  return plan;
}

std::vector<double> token_weights(const ContextSequence& context) {
  std::vector<double> w(context.size(), 1.0);
  for (std::size_t i = 0; i < context.short_term.size(); ++i) {
    const auto& st = context.short_term[i];
    if (st.origin == NarrationOrigin::kGenerated && !st.credibility) {
      throw PlanError("short-term entry " + std::to_string(i) + " is generated but has no credibility");
    }
    const double value = st.credibility.value_or(1.0);
    for (int p = st.begin; p < st.end; ++p) w[static_cast<std::size_t>(p)] = value;
  }
  return w;
}

std::vector<Intervention> cameo_interventions(const ContextSequence& context, const ModificationPlan& plan) {
  plan.validate();
  const auto w = token_weights(context);
  std::vector<Intervention> out;
  out.reserve(plan.heads.size());
  for (const auto& h : plan.heads) out.push_back(Intervention::reweight(h, w, plan.renormalize_rows));
  return out;
}

ForwardTrace<float> apply_cameo(const Model& model, const ContextSequence& context, const ModificationPlan& plan,
                                bool keep_attention) {
  plan.validate_for(model.config());
  const auto iv = cameo_interventions(context, plan);
  return model.forward(context, iv, keep_attention);
}

}  // namespace cameo
