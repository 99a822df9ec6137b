#include "cameo/world.hpp"

#include <random>
#include <set>
#include <sstream>

#include "cameo/util.hpp"

namespace cameo {

using nlohmann::json;

void WorldConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("world config: " + msg); };
  if (n_objects < 2) fail("n_objects must be >= 2");
  if (n_actions < 2) fail("n_actions must be >= 2");
  if (n_objects > static_cast<int>(grammar_objects().size())) {
    fail("n_objects exceeds the grammar's " + std::to_string(grammar_objects().size()) + " objects");
  }
  if (n_actions > static_cast<int>(grammar_actions().size())) {
    fail("n_actions exceeds the grammar's " + std::to_string(grammar_actions().size()) + " actions");
  }
  if (min_episode_len < 1 || max_episode_len < min_episode_len) fail("invalid episode length range");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
  if (!(latent_dependency_rate >= 0 && latent_dependency_rate <= 1)) {
    fail("latent_dependency_rate must lie in [0, 1]");
  }
  if (frame_dim < n_actions + n_objects) fail("frame_dim must be >= n_actions + n_objects");
  if (!(pickup_prob > 0 && pickup_prob <= 1)) fail("pickup_prob must lie in (0, 1]");
  if (!(putdown_prob >= 0 && putdown_prob < 1)) fail("putdown_prob must lie in [0, 1)");
}

void to_json(json& j, const WorldConfig& c) {
  j = json{{"n_objects", c.n_objects},
           {"n_actions", c.n_actions},
           {"episode_len_range", {c.min_episode_len, c.max_episode_len}},
           {"noise_sigma", c.noise_sigma},
           {"latent_dependency_rate", c.latent_dependency_rate},
           {"frame_dim", c.frame_dim},
           {"pickup_prob", c.pickup_prob},
           {"putdown_prob", c.putdown_prob},
           {"seed", c.seed}};
}

void from_json(const json& j, WorldConfig& c) {
  WorldConfig d;
  c.n_objects = j.value("n_objects", d.n_objects);
  c.n_actions = j.value("n_actions", d.n_actions);
  if (j.contains("episode_len_range")) {
    const auto& r = j.at("episode_len_range");
    if (!r.is_array() || r.size() != 2) throw ConfigError("episode_len_range must be [min, max]");
    c.min_episode_len = r[0].get<int>();
    c.max_episode_len = r[1].get<int>();
  } else {
    c.min_episode_len = d.min_episode_len;
    c.max_episode_len = d.max_episode_len;
  }
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.latent_dependency_rate = j.value("latent_dependency_rate", d.latent_dependency_rate);
  c.frame_dim = j.value("frame_dim", d.frame_dim);
  c.pickup_prob = j.value("pickup_prob", d.pickup_prob);
  c.putdown_prob = j.value("putdown_prob", d.putdown_prob);
  c.seed = j.value("seed", d.seed);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

const std::vector<Episode>& Corpus::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return train;
}

std::size_t Corpus::num_events(Split s) const {
  std::size_t n = 0;
  for (const auto& ep : split(s)) n += ep.size();
  return n;
}

const std::vector<std::string>& grammar_objects() {
  static const std::vector<std::string> objects = {
      "knife", "fork",   "spoon", "cup",    "plate",  "bowl",     "pan",  "pot",   "lid",    "towel",
      "sponge", "bottle", "jar",  "box",    "bag",    "phone",    "brush", "hammer", "scissors", "tape",
      "glass", "kettle", "ladle", "mug",    "tray",   "bucket",   "rag",  "key"};
  return objects;
}

const std::vector<std::string>& grammar_actions() {
  static const std::vector<std::string> actions = {
      "picks up", "puts down", "washes", "holds",  "moves",   "cleans", "dries", "opens", "checks",
      "turns",    "shakes",    "wipes",  "lifts",  "rinses",  "fills",  "empties", "stirs", "folds"};
  return actions;
}

Vocabulary world_vocabulary() {
  std::vector<std::string> words = {"c", "the"};
  std::set<std::string> seen(words.begin(), words.end());
  for (const auto& phrase : grammar_actions()) {
    std::istringstream in(phrase);
    std::string w;
    while (in >> w) {
      if (seen.insert(w).second) words.push_back(w);
    }
  }
  for (const auto& o : grammar_objects()) words.push_back(o);
  return Vocabulary(std::move(words));
}

std::string narration_text(int action, int object) {
  return "c " + grammar_actions().at(static_cast<std::size_t>(action)) + " the " +
         grammar_objects().at(static_cast<std::size_t>(object));
}

std::vector<float> clean_frame(const WorldConfig& config, int action, int object_or_minus1) {
  std::vector<float> f(static_cast<std::size_t>(config.frame_dim), 0.0f);
  f[static_cast<std::size_t>(action)] = 1.0f;
  if (object_or_minus1 >= 0) f[static_cast<std::size_t>(config.n_actions + object_or_minus1)] = 1.0f;
  return f;
}

namespace {

Episode generate_episode(const WorldConfig& cfg, const Vocabulary& vocab, const std::string& id,
                         std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len_dist(cfg.min_episode_len, cfg.max_episode_len);
  std::uniform_int_distribution<int> object_dist(0, cfg.n_objects - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.noise_sigma));
  const bool has_use_verbs = cfg.n_actions > 2;
  std::uniform_int_distribution<int> use_dist(2, std::max(2, cfg.n_actions - 1));

  Episode ep;
  ep.id = id;
  const int len = len_dist(rng);
  int held = -1;
  for (int i = 0; i < len; ++i) {
    int action = 0;
    int object = 0;
    bool dependent = false;
    if (held < 0) {
      if (!has_use_verbs || unit(rng) < cfg.pickup_prob) {
        action = kActionPickUp;
        object = object_dist(rng);
        held = object;
      } else {
        action = use_dist(rng);
        object = object_dist(rng);
      }
    } else {
      object = held;
      if (!has_use_verbs || unit(rng) < cfg.putdown_prob) {
        action = kActionPutDown;
        held = -1;
      } else {
        action = use_dist(rng);
      }
      dependent = unit(rng) < cfg.latent_dependency_rate;
    }

    EpisodeStep step;
    step.action = action;
    step.object = object;
    step.latent_dependent = dependent;
    step.event.id = id + "/" + std::to_string(i);
    step.event.episode_id = id;
    step.event.index_in_episode = i;
    step.event.frame_dim = cfg.frame_dim;
    const auto base = clean_frame(cfg, action, dependent ? -1 : object);
    step.event.features.reserve(static_cast<std::size_t>(kFramesPerEvent) * cfg.frame_dim);
    for (int f = 0; f < kFramesPerEvent; ++f) {
      for (float v : base) step.event.features.push_back(cfg.noise_sigma > 0 ? v + noise(rng) : v);
    }
    step.narration = Narration::from_text(narration_text(action, object), vocab);
    ep.steps.push_back(std::move(step));
  }
  return ep;
}

}  // namespace

Corpus generate_corpus(const WorldConfig& config, int n_train, int n_val, int n_test) {
  config.validate();
  if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("split sizes must be >= 1");
  Corpus corpus;
  corpus.vocab = world_vocabulary();
  corpus.world_config = config;
  std::mt19937_64 rng(config.seed);
  auto fill = [&](std::vector<Episode>& out, const char* prefix, int n) {
    for (int i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04d", prefix, i);
      out.push_back(generate_episode(config, corpus.vocab, id, rng));
    }
  };
  fill(corpus.train, "train", n_train);
  fill(corpus.val, "val", n_val);
  fill(corpus.test, "test", n_test);
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  json header = {{"kind", "cameo-corpus"},
                 {"schema_version", kCorpusSchemaVersion},
                 {"world_config", corpus.world_config},
                 {"vocab", corpus.vocab.tokens()},
                 {"splits",
                  {{"train", corpus.train.size()}, {"val", corpus.val.size()}, {"test", corpus.test.size()}}}};
  out += header.dump();
  out += '\n';
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (const auto& ep : corpus.split(s)) {
      json events = json::array();
      for (const auto& step : ep.steps) {
        events.push_back({{"index", step.event.index_in_episode},
                          {"frame_dim", step.event.frame_dim},
                          {"frames", util::encode_floats(step.event.features)},
                          {"narration_text", step.narration.text},
                          {"latent_dependent", step.latent_dependent},
                          {"action", step.action},
                          {"object", step.object}});
      }
      json line = {{"id", ep.id}, {"split", split_name(s)}, {"events", std::move(events)}};
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    pos = end + 1;
    return true;
  };
  std::string_view line;
  if (!next_line(line) || line.empty()) throw CorpusFormatError("corpus file is empty");
  json expected_counts;
  try {
    json header = json::parse(line);
    if (header.value("kind", "") != "cameo-corpus") throw CorpusFormatError("not a corpus file");
    const auto version = header.at("schema_version");
    const std::string version_str = version.is_string() ? version.get<std::string>() : version.dump();
    if (version_str != std::to_string(kCorpusSchemaVersion)) {
      throw CorpusFormatError("corpus schema version " + version_str + " does not match reader version " +
                              std::to_string(kCorpusSchemaVersion));
    }
    corpus.world_config = header.at("world_config").get<WorldConfig>();
    auto words = header.at("vocab").get<std::vector<std::string>>();
    if (words.size() < static_cast<std::size_t>(kNumSpecials)) throw CorpusFormatError("vocabulary too short");
    corpus.vocab = Vocabulary(std::vector<std::string>(words.begin() + kNumSpecials, words.end()));
    if (corpus.vocab.tokens() != words) throw CorpusFormatError("vocabulary special markers do not match");
    expected_counts = header.at("splits");
  } catch (const json::exception& e) {
    throw CorpusFormatError(std::string("malformed corpus header: ") + e.what());
  }

  std::set<std::string> ids;
  while (next_line(line)) {
    if (line.empty()) continue;
    try {
      json rec = json::parse(line);
      Episode ep;
      ep.id = rec.at("id").get<std::string>();
      if (!ids.insert(ep.id).second) throw CorpusFormatError("duplicate episode id " + ep.id);
      const auto split = rec.at("split").get<std::string>();
      for (const auto& ev : rec.at("events")) {
        EpisodeStep step;
        step.event.index_in_episode = ev.at("index").get<int>();
        step.event.episode_id = ep.id;
        step.event.id = ep.id + "/" + std::to_string(step.event.index_in_episode);
        step.event.frame_dim = ev.value("frame_dim", corpus.world_config.frame_dim);
        const auto& frames = ev.at("frames");
        if (frames.is_string()) {
          step.event.features = util::decode_floats(frames.get<std::string>());
        } else {
          step.event.features = frames.get<std::vector<float>>();
        }
        step.narration = Narration::from_text(ev.at("narration_text").get<std::string>(), corpus.vocab);
        if (step.narration.token_ids.empty()) throw CorpusFormatError("empty narration in " + step.event.id);
        step.latent_dependent = ev.value("latent_dependent", false);
        step.action = ev.value("action", -1);
        step.object = ev.value("object", -1);
        ep.steps.push_back(std::move(step));
      }
      ep.validate();
      if (split == "train") corpus.train.push_back(std::move(ep));
      else if (split == "val") corpus.val.push_back(std::move(ep));
      else if (split == "test") corpus.test.push_back(std::move(ep));
      else throw CorpusFormatError("unknown split '" + split + "'");
    } catch (const json::exception& e) {
      throw CorpusFormatError(std::string("malformed episode record: ") + e.what());
    } catch (const ShapeError& e) {
      throw CorpusFormatError(e.what());
    } catch (const UnknownToken& e) {
      throw CorpusFormatError(e.what());
    }
  }
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto want = expected_counts.value(split_name(s), std::size_t{0});
    if (corpus.split(s).size() != want) {
      throw CorpusFormatError(std::string("split '") + split_name(s) + "' has " +
                              std::to_string(corpus.split(s).size()) + " episodes, header declares " +
                              std::to_string(want) + " (truncated file?)");
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  util::write_file(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(util::read_file(path)); }

std::string corpus_fingerprint(const Corpus& corpus) { return util::hex32(util::crc32(serialize_corpus(corpus))); }

}  // namespace cameo
