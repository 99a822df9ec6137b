#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cameo/context.hpp"
#include "cameo/core.hpp"

namespace cameo {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Decoder-only transformer hyperparameters. `rope` and `layer_norm` exist
/// so that small circuits can be wired by hand in tests; trained models keep
/// both on.
struct ModelConfig {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_v = 32;
  int m_event = 4;
  int vocab_size = 0;
  int max_context = 256;
  int mlp_ratio = 4;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  bool rope = true;
  bool layer_norm = true;

  int head_dim() const { return d_model / n_heads; }
  int num_heads_total() const { return n_layers * n_heads; }
  void validate() const;  // throws ConfigError
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct AttentionHeadId {
  int layer = 0;
  int head = 0;
  auto operator<=>(const AttentionHeadId&) const = default;
};

void to_json(nlohmann::json& j, const AttentionHeadId& h);
void from_json(const nlohmann::json& j, AttentionHeadId& h);

enum class InterventionKind { kAblateHead, kReweightAttention };

/// Per-head edit applied during a forward pass.
///
/// kAblateHead zeroes the head's value-weighted output before the output
/// projection. kReweightAttention multiplies every post-softmax attention row
/// of the head elementwise by `weights` (indexed by key position, broadcast
/// over query rows); positions at or beyond weights.size() keep weight 1, so
/// tokens appended while decoding are unweighted. Rows are re-normalized to
/// sum to one only when `renormalize_rows` is set.
struct Intervention {
  InterventionKind kind = InterventionKind::kAblateHead;
  AttentionHeadId head;
  std::vector<double> weights;
  bool renormalize_rows = false;

  static Intervention ablate(AttentionHeadId head) { return {InterventionKind::kAblateHead, head, {}, false}; }
  static Intervention reweight(AttentionHeadId head, std::vector<double> weights, bool renormalize = false) {
    return {InterventionKind::kReweightAttention, head, std::move(weights), renormalize};
  }
};

template <typename Scalar>
struct ForwardTrace {
  RowMatrix<Scalar> logits;                  // [T, V]
  std::vector<RowMatrix<Scalar>> attention;  // layer * n_heads + head -> [T, T], only when requested
};

struct ParameterTensor {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Flat parameter layout in declared order; checkpoints store tensors in this order.
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelConfig& config);
  const std::vector<ParameterTensor>& tensors() const { return tensors_; }
  const ParameterTensor& get(std::string_view name) const;  // throws OutOfRange
  std::size_t total() const { return total_; }

 private:
  std::vector<ParameterTensor> tensors_;
  std::size_t total_ = 0;
};

template <typename Scalar>
class Transformer {
 public:
  using Matrix = RowMatrix<Scalar>;

  // Parameters are drawn from config.seed.
  explicit Transformer(const ModelConfig& config);
  static Transformer zeros(const ModelConfig& config);

  Transformer(const Transformer& other);
  Transformer& operator=(const Transformer& other);
  Transformer(Transformer&&) noexcept = default;
  Transformer& operator=(Transformer&&) noexcept = default;
  ~Transformer();

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return *layout_; }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }
  Eigen::Map<Matrix> tensor(std::string_view name);
  Eigen::Map<const Matrix> tensor(std::string_view name) const;

  template <typename Other>
  Transformer<Other> cast() const;

  // Maps one event to m_event embeddings: per-frame affine projection, then
  // a learned mixture over frames (initialized to the mean) plus a learned
  // per-slot query vector.
  Matrix bridge_event(const Event& event) const;

  ForwardTrace<Scalar> forward(const ContextSequence& context, std::span<const Intervention> interventions = {},
                               bool keep_attention = false) const;

  // Teacher-forced log-probabilities of the narration's word tokens, in nats.
  std::vector<double> narration_token_logprobs(const ContextSequence& context, const Narration& narration,
                                               std::span<const Intervention> interventions = {}) const;
  double narration_logprob(const ContextSequence& context, const Narration& narration,
                           std::span<const Intervention> interventions = {}) const;

  // Decoding stops at narration-end or after max_len words. Only word tokens
  // and narration-end can be produced.
  Narration greedy_narration(const ContextSequence& context, const Vocabulary& vocab, int max_len,
                             std::span<const Intervention> interventions = {}) const;
  Narration sample_narration(const ContextSequence& context, const Vocabulary& vocab, double temperature,
                             std::uint64_t seed, int max_len,
                             std::span<const Intervention> interventions = {}) const;
  // `count` independent draws sharing one prefill; draw i uses stream (seed, i).
  std::vector<Narration> sample_narrations(const ContextSequence& context, const Vocabulary& vocab, int count,
                                           double temperature, std::uint64_t seed, int max_len,
                                           std::span<const Intervention> interventions = {}) const;

  // Mean cross-entropy over positions p with loss_mask[p] != 0, where position
  // p predicts the token at p + 1. Adds grad_scale * dLoss/dParams into
  // `grad`. No interventions. Dropout is applied iff config.dropout > 0 and a
  // generator is supplied.
  double loss_and_gradient(const ContextSequence& sequence, std::span<const std::uint8_t> loss_mask,
                           std::span<Scalar> grad, double grad_scale = 1.0,
                           std::mt19937_64* dropout_rng = nullptr) const;

  // Full or incremental passes through the layer stack since construction or
  // the last reset. Read concurrently; safe to call from worker threads.
  std::uint64_t forward_passes() const { return forward_passes_->load(); }
  void reset_forward_passes() const { forward_passes_->store(0); }

 private:
  struct Impl;
  friend struct Impl;
  template <typename>
  friend class Transformer;

  Transformer(const ModelConfig& config, bool random_init);

  ModelConfig config_;
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<Scalar> params_;
  std::unique_ptr<std::atomic<std::uint64_t>> forward_passes_;
};

using Model = Transformer<float>;

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace cameo
