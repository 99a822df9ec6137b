#include "cameo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cameo {

namespace {

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  const std::string norm = normalize(text);
  std::size_t i = 0;
  while (i < norm.size()) {
    const std::size_t j = std::min(norm.find(' ', i), norm.size());
    out.emplace_back(norm.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, int> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference) {
  const auto cand = words(candidate);
  const auto ref = words(reference);
  if (cand.empty()) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cc = ngram_counts(cand, n);
    const auto rc = ngram_counts(ref, n);
    int matches = 0;
    for (const auto& [gram, count] : cc) {
      auto it = rc.find(gram);
      if (it != rc.end()) matches += std::min(count, it->second);
    }
    const int total = static_cast<int>(cand.size() >= n ? cand.size() - n + 1 : 1);
    double p;
    if (matches > 0) {
      p = static_cast<double>(matches) / total;
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / (total + 1.0);
    }
    log_sum += std::log(p) / 4.0;
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto a = words(candidate);
  const auto b = words(reference);
  if (a.empty() || b.empty()) return 0.0;
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev[b.size()];
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(a.size());
  const double r = lcs / static_cast<double>(b.size());
  return 2 * p * r / (p + r);
}

TfIdfStats TfIdfStats::build(std::span<const std::string> documents) {
  TfIdfStats s;
  for (const auto& doc : documents) {
    auto toks = words(doc);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (const auto& t : toks) ++s.df_[t];
    ++s.n_docs_;
  }
  return s;
}

TfIdfStats TfIdfStats::build(std::span<const Episode> episodes) {
  std::vector<std::string> docs;
  for (const auto& ep : episodes) {
    for (const auto& step : ep.steps) docs.push_back(step.narration.text);
  }
  return build(docs);
}

double TfIdfStats::idf(const std::string& word) const {
  auto it = df_.find(word);
  const double df = it == df_.end() ? 0.0 : it->second;
  return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + df)) + 1.0;
}

double sts_proxy(std::string_view candidate, std::string_view reference, const TfIdfStats& stats) {
  const auto a = words(candidate);
  const auto b = words(reference);
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::map<std::string, double> va, vb;
  for (const auto& w : a) va[w] += 1;
  for (const auto& w : b) vb[w] += 1;
  double dot = 0, na = 0, nb = 0;
  for (auto& [w, tf] : va) {
    const double x = tf * stats.idf(w);
    na += x * x;
    auto it = vb.find(w);
    if (it != vb.end()) dot += x * it->second * stats.idf(w);
  }
  for (auto& [w, tf] : vb) {
    const double y = tf * stats.idf(w);
    nb += y * y;
  }
  return dot / std::sqrt(na * nb);
}

MetricRow score_pair(std::string_view candidate, std::string_view reference, const TfIdfStats& stats) {
  return {sts_proxy(candidate, reference, stats), rouge_l(candidate, reference), bleu(candidate, reference)};
}

}  // namespace cameo
