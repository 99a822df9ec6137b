#pragma once

#include <optional>
#include <vector>

#include "cameo/core.hpp"

namespace cameo {

enum class SegmentTag {
  kLongTermMarker,
  kShortTermMarker,
  kEvent,               // event block of a memory entry
  kLongTermNarration,   // narration-begin, words, narration-end of a long-term entry
  kShortTermNarration,  // same for a short-term entry; see ContextSequence::entry
  kQueryEvent,
  kPrompt,              // narration-begin after the query event
  kTarget,              // tokens appended during teacher forcing or decoding
};

const char* segment_name(SegmentTag tag);

/// One input position: either a token id or slot `slot` of the bridge output
/// for `events[event]`.
struct ContextItem {
  enum class Kind { kToken, kEventSlot };
  Kind kind = Kind::kToken;
  TokenId token = 0;
  int event = -1;
  int slot = -1;
  bool operator==(const ContextItem&) const = default;
};

/// Interleaved model input plus the segment map needed to build per-position
/// attention weights. All per-position vectors have length size().
struct ContextSequence {
  std::vector<ContextItem> items;
  std::vector<Event> events;
  std::vector<SegmentTag> segments;
  std::vector<int> entry;           // short-term entry index for kShortTermNarration, else -1
  std::vector<double> credibility;  // per position, 1 outside short-term narrations

  // Per short-term entry, in context order.
  struct ShortTermInfo {
    NarrationOrigin origin = NarrationOrigin::kGroundTruth;
    std::optional<double> credibility;
    int begin = 0;  // first position of the narration segment
    int end = 0;    // one past the last position
  };
  std::vector<ShortTermInfo> short_term;

  std::size_t size() const { return items.size(); }

  void push_token(TokenId id, SegmentTag tag, int entry_index = -1, double cred = 1.0);
  // Appends m_event slots for `event`.
  void push_event(const Event& event, int m_event, SegmentTag tag);
};

}  // namespace cameo
