#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cameo/context.hpp"
#include "cameo/core.hpp"

namespace cameo {

enum class MemoryKind { kLongTerm, kShortTerm };

struct MemoryEntry {
  Event event;
  Narration narration;
  MemoryKind kind = MemoryKind::kShortTerm;
  // Unset means "not estimated"; treated as 1 when building contexts.
  std::optional<double> credibility;

  double weight() const { return credibility.value_or(1.0); }
};

/// Long-term entries (retrieved from other episodes) and short-term entries
/// (recent events of the current episode, oldest first).
struct MemorySet {
  std::vector<MemoryEntry> long_term;
  std::vector<MemoryEntry> short_term;

  std::size_t shots() const { return long_term.size() + short_term.size(); }
  // Credibility > 0, long-term narrations are ground truth, short-term
  // entries ordered by event index. Throws InvalidArgument.
  void validate() const;
};

struct ShotConfig {
  int n_long = 8;
  int n_short = 8;
  int total() const { return n_long + n_short; }
};

// Mean of the frame vectors, L2-normalized; an all-zero mean stays zero.
std::vector<float> embed_event_for_retrieval(const Event& event);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Immutable store of (event, ground-truth narration) pairs with one
/// retrieval embedding per entry.
class PersistentStore {
 public:
  PersistentStore() = default;
  static PersistentStore build(std::span<const Episode> episodes);

  std::size_t size() const { return entries_.size(); }
  const MemoryEntry& entry(std::size_t i) const { return entries_[i]; }
  std::span<const float> embedding(std::size_t i) const {
    return std::span<const float>(embeddings_).subspan(i * dim_, dim_);
  }
  int embedding_dim() const { return static_cast<int>(dim_); }

  // The n entries most cosine-similar to `query`, excluding the query's own
  // episode. Ties go to the smaller (episode id, event index). Returns fewer
  // than n entries only when fewer are eligible. Throws EmptyStore.
  std::vector<MemoryEntry> retrieve_long_term(const Event& query, int n) const;
  std::vector<std::size_t> retrieve_indices(const Event& query, int n) const;

  // Embedding sidecar keyed by a corpus fingerprint. load returns false (and
  // leaves the store untouched) when the file is missing or stale.
  void save_embeddings(const std::filesystem::path& path, const std::string& fingerprint) const;
  bool load_embeddings(const std::filesystem::path& path, const std::string& fingerprint);

 private:
  std::vector<MemoryEntry> entries_;
  std::vector<float> embeddings_;
  std::size_t dim_ = 0;
};

// Last min(n, buffer.size()) entries, oldest first.
std::vector<MemoryEntry> retrieve_short_term(std::span<const MemoryEntry> buffer, int n);

void update_short_term(std::vector<MemoryEntry>& buffer, const Event& event, Narration narration,
                       std::optional<double> credibility = std::nullopt);

/// Layout: [LTM] (event block, <nb>, words, <ne>) per long-term entry, then
/// [STM] and the same per short-term entry, then the query event block and
/// <nb>. A marker is emitted only when its section is non-empty. Throws
/// ContextTooLong when max_len > 0 and the result is longer.
ContextSequence assemble_context(const MemorySet& memory, const Event& query, int m_event,
                                 std::size_t max_len = 0);

}  // namespace cameo
