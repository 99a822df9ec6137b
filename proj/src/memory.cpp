#include "cameo/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cameo/util.hpp"

namespace cameo {

const char* segment_name(SegmentTag tag) {
  switch (tag) {
    case SegmentTag::kLongTermMarker: return "long-term-marker";
    case SegmentTag::kShortTermMarker: return "short-term-marker";
    case SegmentTag::kEvent: return "event";
    case SegmentTag::kLongTermNarration: return "lt-narration";
    case SegmentTag::kShortTermNarration: return "st-narration";
    case SegmentTag::kQueryEvent: return "query-event";
    case SegmentTag::kPrompt: return "prompt";
    case SegmentTag::kTarget: return "target";
  }
  return "?";
}

void ContextSequence::push_token(TokenId id, SegmentTag tag, int entry_index, double cred) {
  items.push_back({ContextItem::Kind::kToken, id, -1, -1});
  segments.push_back(tag);
  entry.push_back(entry_index);
  credibility.push_back(cred);
}

void ContextSequence::push_event(const Event& event, int m_event, SegmentTag tag) {
  const int idx = static_cast<int>(events.size());
  events.push_back(event);
  for (int s = 0; s < m_event; ++s) {
    items.push_back({ContextItem::Kind::kEventSlot, 0, idx, s});
    segments.push_back(tag);
    entry.push_back(-1);
    credibility.push_back(1.0);
  }
}

void MemorySet::validate() const {
  for (const auto& e : long_term) {
    if (e.kind != MemoryKind::kLongTerm) throw InvalidArgument("long-term list holds a short-term entry");
    if (e.narration.origin != NarrationOrigin::kGroundTruth) {
      throw InvalidArgument("long-term entries must carry ground-truth narrations");
    }
  }
  for (std::size_t i = 0; i < short_term.size(); ++i) {
    const auto& e = short_term[i];
    if (e.kind != MemoryKind::kShortTerm) throw InvalidArgument("short-term list holds a long-term entry");
    if (i > 0 && e.event.index_in_episode <= short_term[i - 1].event.index_in_episode) {
      throw InvalidArgument("short-term entries must be ordered by event index");
    }
  }
  for (const auto* list : {&long_term, &short_term}) {
    for (const auto& e : *list) {
      if (!(e.weight() > 0)) throw InvalidArgument("memory credibility must be > 0");
    }
  }
}

std::vector<float> embed_event_for_retrieval(const Event& event) {
  std::vector<double> mean(static_cast<std::size_t>(event.frame_dim), 0.0);
  const int frames = event.num_frames();
  for (int f = 0; f < frames; ++f) {
    auto fr = event.frame(f);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += fr[k];
  }
  double norm = 0;
  for (double& v : mean) {
    v /= std::max(frames, 1);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(mean.size(), 0.0f);
  if (norm > 0) {
    for (std::size_t k = 0; k < mean.size(); ++k) out[k] = static_cast<float>(mean[k] / norm);
  }
  return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different widths");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

PersistentStore PersistentStore::build(std::span<const Episode> episodes) {
  PersistentStore store;
  for (const auto& ep : episodes) {
    for (const auto& step : ep.steps) {
      MemoryEntry e;
      e.event = step.event;
      e.narration = step.narration;
      e.narration.origin = NarrationOrigin::kGroundTruth;
      e.kind = MemoryKind::kLongTerm;
      auto emb = embed_event_for_retrieval(step.event);
      if (store.dim_ == 0) store.dim_ = emb.size();
      if (emb.size() != store.dim_) throw ShapeError("store events have inconsistent frame widths");
      store.embeddings_.insert(store.embeddings_.end(), emb.begin(), emb.end());
      store.entries_.push_back(std::move(e));
    }
  }
  return store;
}

std::vector<std::size_t> PersistentStore::retrieve_indices(const Event& query, int n) const {
  if (entries_.empty()) throw EmptyStore("long-term retrieval from an empty store");
  if (n <= 0) return {};
  const auto q = embed_event_for_retrieval(query);
  if (q.size() != dim_) throw ShapeError("query event width differs from the store");
  std::vector<std::size_t> candidates;
  std::vector<double> score(entries_.size(), 0.0);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].event.episode_id == query.episode_id) continue;
    // Unit-norm or zero embeddings: the dot product is the cosine.
    auto e = embedding(i);
    double dot = 0;
    bool zero = true;
    for (std::size_t k = 0; k < dim_; ++k) {
      dot += static_cast<double>(q[k]) * e[k];
      zero = zero && e[k] == 0.0f;
    }
    // Zero embeddings rank after every real cosine, including negative ones.
    score[i] = zero ? -2.0 : dot;
    candidates.push_back(i);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    const auto& ea = entries_[a].event;
    const auto& eb = entries_[b].event;
    if (ea.episode_id != eb.episode_id) return ea.episode_id < eb.episode_id;
    return ea.index_in_episode < eb.index_in_episode;
  };
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(n), candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

std::vector<MemoryEntry> PersistentStore::retrieve_long_term(const Event& query, int n) const {
  std::vector<MemoryEntry> out;
  for (auto i : retrieve_indices(query, n)) out.push_back(entries_[i]);
  return out;
}

namespace {
constexpr char kSidecarMagic[8] = {'C', 'A', 'M', 'E', 'O', 'E', 'M', 'B'};
}

void PersistentStore::save_embeddings(const std::filesystem::path& path, const std::string& fingerprint) const {
  std::string buf(kSidecarMagic, sizeof kSidecarMagic);
  auto put_u64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  put_u64(fingerprint.size());
  buf += fingerprint;
  put_u64(entries_.size());
  put_u64(dim_);
  std::vector<char> raw(embeddings_.size() * 4);
  std::memcpy(raw.data(), embeddings_.data(), raw.size());
  buf.append(raw.begin(), raw.end());
  util::write_file(path, buf);
}

bool PersistentStore::load_embeddings(const std::filesystem::path& path, const std::string& fingerprint) {
  if (!std::filesystem::exists(path)) return false;
  const std::string buf = util::read_file(path);
  std::size_t pos = 0;
  auto get_u64 = [&](std::uint64_t& v) {
    if (pos + 8 > buf.size()) return false;
    v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + b])) << (8 * b);
    pos += 8;
    return true;
  };
  if (buf.compare(0, sizeof kSidecarMagic, std::string(kSidecarMagic, sizeof kSidecarMagic)) != 0) return false;
  pos = sizeof kSidecarMagic;
  std::uint64_t flen = 0, n = 0, dim = 0;
  if (!get_u64(flen) || pos + flen > buf.size()) return false;
  if (buf.substr(pos, flen) != fingerprint) return false;
  pos += flen;
  if (!get_u64(n) || !get_u64(dim)) return false;
  if (n != entries_.size() || (dim != dim_ && !entries_.empty())) return false;
  if (pos + n * dim * 4 != buf.size()) return false;
  std::vector<float> emb(n * dim);
  std::memcpy(emb.data(), buf.data() + pos, emb.size() * 4);
  embeddings_ = std::move(emb);
  dim_ = dim;
  return true;
}

std::vector<MemoryEntry> retrieve_short_term(std::span<const MemoryEntry> buffer, int n) {
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 0)), buffer.size());
  return std::vector<MemoryEntry>(buffer.end() - static_cast<std::ptrdiff_t>(k), buffer.end());
}

void update_short_term(std::vector<MemoryEntry>& buffer, const Event& event, Narration narration,
                       std::optional<double> credibility) {
  MemoryEntry e;
  e.event = event;
  e.narration = std::move(narration);
  e.kind = MemoryKind::kShortTerm;
  e.credibility = credibility;
  buffer.push_back(std::move(e));
}

ContextSequence assemble_context(const MemorySet& memory, const Event& query, int m_event, std::size_t max_len) {
  memory.validate();
  ContextSequence ctx;
  const TokenId nb = Vocabulary::special(Special::kNarrationBegin);
  const TokenId ne = Vocabulary::special(Special::kNarrationEnd);
  if (!memory.long_term.empty()) {
    ctx.push_token(Vocabulary::special(Special::kLongTermMarker), SegmentTag::kLongTermMarker);
    for (const auto& e : memory.long_term) {
      ctx.push_event(e.event, m_event, SegmentTag::kEvent);
      ctx.push_token(nb, SegmentTag::kLongTermNarration);
      for (TokenId id : e.narration.token_ids) ctx.push_token(id, SegmentTag::kLongTermNarration);
      ctx.push_token(ne, SegmentTag::kLongTermNarration);
    }
  }
  if (!memory.short_term.empty()) {
    ctx.push_token(Vocabulary::special(Special::kShortTermMarker), SegmentTag::kShortTermMarker);
    for (std::size_t i = 0; i < memory.short_term.size(); ++i) {
      const auto& e = memory.short_term[i];
      const int idx = static_cast<int>(i);
      const double w = e.weight();
      ctx.push_event(e.event, m_event, SegmentTag::kEvent);
      ContextSequence::ShortTermInfo info;
      info.origin = e.narration.origin;
      info.credibility = e.credibility;
      info.begin = static_cast<int>(ctx.size());
      ctx.push_token(nb, SegmentTag::kShortTermNarration, idx, w);
      for (TokenId id : e.narration.token_ids) ctx.push_token(id, SegmentTag::kShortTermNarration, idx, w);
      ctx.push_token(ne, SegmentTag::kShortTermNarration, idx, w);
      info.end = static_cast<int>(ctx.size());
      ctx.short_term.push_back(info);
    }
  }
  ctx.push_event(query, m_event, SegmentTag::kQueryEvent);
  ctx.push_token(nb, SegmentTag::kPrompt);
  if (max_len > 0 && ctx.size() > max_len) {
    throw ContextTooLong("assembled context of " + std::to_string(ctx.size()) + " positions exceeds " +
                         std::to_string(max_len));
  }
  return ctx;
}

}  // namespace cameo
