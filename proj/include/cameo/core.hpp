#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cameo/errors.hpp"

namespace cameo {

using TokenId = std::int32_t;

// Frames per event; clips are downsampled to this fixed length.
inline constexpr int kFramesPerEvent = 8;

// Special markers occupy the first ids of every vocabulary.
enum class Special : TokenId {
  kPad = 0,
  kLongTermMarker,
  kShortTermMarker,
  kEventPlaceholder,
  kNarrationBegin,
  kNarrationEnd,
  kSequenceEnd,
};
inline constexpr int kNumSpecials = 7;

/// Closed vocabulary: special markers followed by the surface words of the
/// synthetic grammar. Ids are dense in [0, size()).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(std::string_view word) const;  // throws UnknownToken
  std::optional<TokenId> find(std::string_view word) const;
  const std::string& token(TokenId id) const;  // throws InvalidTokenId

  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }
  bool is_word(TokenId id) const {
    return id >= kNumSpecials && id < static_cast<TokenId>(size());
  }
  static constexpr TokenId special(Special s) { return static_cast<TokenId>(s); }

  // CRC32 over the token list; stored in checkpoints.
  std::uint32_t hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Lowercase, collapse runs of whitespace, trim.
std::string normalize(std::string_view text);

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

// Special markers are stripped; out-of-range ids raise InvalidTokenId.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

/// One video clip stand-in: kFramesPerEvent feature vectors of equal width,
/// stored row-major in `features`.
struct Event {
  std::string id;
  std::string episode_id;
  int index_in_episode = 0;
  int frame_dim = 0;
  std::vector<float> features;

  int num_frames() const { return frame_dim == 0 ? 0 : static_cast<int>(features.size()) / frame_dim; }
  std::span<const float> frame(int f) const {
    return std::span<const float>(features).subspan(static_cast<std::size_t>(f) * frame_dim, frame_dim);
  }
  // Throws ShapeError unless there are exactly kFramesPerEvent frames of `frame_dim` values.
  void validate() const;

  bool operator==(const Event&) const = default;
};

enum class NarrationOrigin { kGroundTruth, kGenerated };

struct Narration {
  std::string text;
  std::vector<TokenId> token_ids;
  NarrationOrigin origin = NarrationOrigin::kGroundTruth;

  static Narration from_text(std::string_view text, const Vocabulary& vocab,
                             NarrationOrigin origin = NarrationOrigin::kGroundTruth);
  static Narration from_ids(std::vector<TokenId> ids, const Vocabulary& vocab,
                            NarrationOrigin origin = NarrationOrigin::kGenerated);

  bool operator==(const Narration&) const = default;
};

struct EpisodeStep {
  Event event;
  Narration narration;
  // Generator facts kept for analysis; not visible to the model.
  bool latent_dependent = false;
  int action = -1;
  int object = -1;

  bool operator==(const EpisodeStep&) const = default;
};

struct Episode {
  std::string id;
  std::vector<EpisodeStep> steps;

  std::size_t size() const { return steps.size(); }
  // Non-empty, contiguous indices, consistent episode ids.
  void validate() const;

  bool operator==(const Episode&) const = default;
};

}  // namespace cameo
