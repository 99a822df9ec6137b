#include "cameo/core.hpp"

#include <zlib.h>

#include <cctype>
#include <sstream>

namespace cameo {
namespace {

constexpr const char* kSpecialNames[kNumSpecials] = {
    "<pad>", "<ltm>", "<stm>", "<event>", "<nb>", "<ne>", "<eos>",
};

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> words) {
  tokens_.reserve(kNumSpecials + words.size());
  for (const char* name : kSpecialNames) tokens_.emplace_back(name);
  for (auto& w : words) tokens_.push_back(normalize(w));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find(' ') != std::string::npos) {
      throw ConfigError("vocabulary entry '" + tokens_[i] + "' is not a single word");
    }
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view word) const {
  auto found = find(word);
  if (!found) throw UnknownToken("unknown token '" + std::string(word) + "'");
  return *found;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || id >= static_cast<TokenId>(tokens_.size())) {
    throw InvalidTokenId("token id " + std::to_string(id) + " outside [0, " +
                         std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint32_t Vocabulary::hash() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& t : tokens_) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(t.data()), static_cast<uInt>(t.size()));
    const Bytef sep = '\n';
    crc = crc32(crc, &sep, 1);
  }
  return static_cast<std::uint32_t>(crc);
}

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  std::istringstream in(normalize(text));
  std::string word;
  while (in >> word) ids.push_back(vocab.id(word));
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& word = vocab.token(id);
    if (vocab.is_special(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

void Event::validate() const {
  if (frame_dim <= 0) throw ShapeError("event " + id + ": frame dimension must be positive");
  if (features.size() != static_cast<std::size_t>(kFramesPerEvent) * frame_dim) {
    throw ShapeError("event " + id + ": expected " + std::to_string(kFramesPerEvent) + " frames of " +
                     std::to_string(frame_dim) + " values, got " + std::to_string(features.size()) +
                     " values");
  }
}

Narration Narration::from_text(std::string_view text, const Vocabulary& vocab, NarrationOrigin origin) {
  Narration n;
  n.token_ids = tokenize(text, vocab);
  n.text = detokenize(n.token_ids, vocab);
  n.origin = origin;
  return n;
}

Narration Narration::from_ids(std::vector<TokenId> ids, const Vocabulary& vocab, NarrationOrigin origin) {
  Narration n;
  n.text = detokenize(ids, vocab);
  std::erase_if(ids, [&](TokenId id) { return vocab.is_special(id); });
  n.token_ids = std::move(ids);
  n.origin = origin;
  return n;
}

void Episode::validate() const {
  if (steps.empty()) throw CorpusFormatError("episode " + id + " has no events");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Event& e = steps[i].event;
    if (e.index_in_episode != static_cast<int>(i)) {
      throw CorpusFormatError("episode " + id + ": event " + std::to_string(i) + " has index " +
                              std::to_string(e.index_in_episode));
    }
    if (e.episode_id != id) throw CorpusFormatError("event " + e.id + " does not belong to episode " + id);
    e.validate();
  }
}

}  // namespace cameo
