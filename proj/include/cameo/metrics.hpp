#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cameo/core.hpp"

namespace cameo {

// Sentence-level BLEU over normalized, whitespace-split tokens: geometric
// mean of clipped 1- to 4-gram precisions times the brevity penalty. A
// higher order with no matches uses 1 / (count + 1), where a candidate
// shorter than the order has count 1; no unigram matches gives 0, as does an
// empty candidate.
double bleu(std::string_view candidate, std::string_view reference);

// LCS-based F1; 0 when either side is empty.
double rouge_l(std::string_view candidate, std::string_view reference);

/// Document frequencies for TF-IDF weighting, idf(w) = ln((1 + N) / (1 + df(w))) + 1.
class TfIdfStats {
 public:
  TfIdfStats() = default;
  static TfIdfStats build(std::span<const std::string> documents);
  static TfIdfStats build(std::span<const Episode> episodes);  // one document per narration

  double idf(const std::string& word) const;
  std::size_t num_documents() const { return n_docs_; }

 private:
  std::unordered_map<std::string, int> df_;
  std::size_t n_docs_ = 0;
};

// Cosine of raw-count TF times IDF vectors. Both empty gives 1, one empty 0.
double sts_proxy(std::string_view candidate, std::string_view reference, const TfIdfStats& stats);

struct MetricRow {
  double sts_proxy = 0;
  double rouge_l = 0;
  double bleu = 0;
};

MetricRow score_pair(std::string_view candidate, std::string_view reference, const TfIdfStats& stats);

}  // namespace cameo
