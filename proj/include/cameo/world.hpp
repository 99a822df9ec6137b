#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cameo/core.hpp"

namespace cameo {

inline constexpr int kCorpusSchemaVersion = 1;

// Action ids 0 and 1 are the register-changing actions.
inline constexpr int kActionPickUp = 0;
inline constexpr int kActionPutDown = 1;

/// Parameters of the synthetic episodic world. Each episode carries a single
/// "held object" register: a pick-up sets it, a put-down clears it, and while
/// it is set every other action targets the held object. A latent-dependent
/// event shows the action but zeroes the object block of its frames, so its
/// object can only be recovered from earlier events.
struct WorldConfig {
  int n_objects = 10;
  int n_actions = 8;
  int min_episode_len = 12;
  int max_episode_len = 24;
  double noise_sigma = 0.1;
  double latent_dependency_rate = 0.5;
  int frame_dim = 32;
  double pickup_prob = 0.5;
  double putdown_prob = 0.15;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  bool operator==(const WorldConfig&) const = default;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);

struct Corpus {
  std::vector<Episode> train;
  std::vector<Episode> val;
  std::vector<Episode> test;
  Vocabulary vocab;
  WorldConfig world_config;

  const std::vector<Episode>& split(Split s) const;
  std::size_t num_events(Split s) const;
  bool operator==(const Corpus&) const = default;
};

// Grammar word lists. The vocabulary always holds the full grammar; the
// world config selects prefixes of the object and action lists.
const std::vector<std::string>& grammar_objects();
const std::vector<std::string>& grammar_actions();  // verb phrases, index = action id
Vocabulary world_vocabulary();

// "c <verb phrase> the <object>"
std::string narration_text(int action, int object);

// Noise-free frame template for an event (one-hot action, one-hot object or a
// zero block), width config.frame_dim.
std::vector<float> clean_frame(const WorldConfig& config, int action, int object_or_minus1);

Corpus generate_corpus(const WorldConfig& config, int n_train, int n_val, int n_test);

std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view text);  // throws CorpusFormatError
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

// Hex CRC32 of the serialized corpus; identifies runs produced from it.
std::string corpus_fingerprint(const Corpus& corpus);

}  // namespace cameo
