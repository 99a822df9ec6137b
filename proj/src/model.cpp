#include "cameo/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace cameo {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_model < 1 || n_layers < 1 || n_heads < 1) fail("d_model, n_layers and n_heads must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (rope && head_dim() % 2 != 0) fail("rotary embeddings need an even head dimension");
  if (d_v < 1) fail("d_v must be positive");
  if (m_event < 1) fail("m_event must be >= 1");
  if (vocab_size < kNumSpecials + 1) fail("vocab_size too small");
  if (max_context < 2) fail("max_context must be >= 2");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0, 1)");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"d_model", c.d_model},   {"n_layers", c.n_layers},       {"n_heads", c.n_heads},
           {"d_v", c.d_v},           {"m_event", c.m_event},         {"vocab_size", c.vocab_size},
           {"max_context", c.max_context}, {"mlp_ratio", c.mlp_ratio}, {"dropout", c.dropout},
           {"seed", c.seed},         {"rope", c.rope},               {"layer_norm", c.layer_norm}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_v = j.value("d_v", d.d_v);
  c.m_event = j.value("m_event", d.m_event);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_context = j.value("max_context", d.max_context);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.dropout = j.value("dropout", d.dropout);
  c.seed = j.value("seed", d.seed);
  c.rope = j.value("rope", d.rope);
  c.layer_norm = j.value("layer_norm", d.layer_norm);
}

void to_json(json& j, const AttentionHeadId& h) { j = json{{"layer", h.layer}, {"head", h.head}}; }
void from_json(const json& j, AttentionHeadId& h) {
  h.layer = j.at("layer").get<int>();
  h.head = j.at("head").get<int>();
}

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  const int d = c.d_model;
  const int hidden = c.mlp_ratio * d;
  auto add = [&](std::string name, int rows, int cols) {
    tensors_.push_back({std::move(name), total_, rows, cols});
    total_ += static_cast<std::size_t>(rows) * cols;
  };
  add("bridge.frame_w", d, c.d_v);
  add("bridge.frame_b", 1, d);
  add("bridge.mix", c.m_event, kFramesPerEvent);
  add("bridge.query", c.m_event, d);
  add("tok_emb", c.vocab_size, d);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.g", 1, d);
    add(p + "ln1.b", 1, d);
    add(p + "attn.wqkv", 3 * d, d);
    add(p + "attn.bqkv", 1, 3 * d);
    add(p + "attn.wo", d, d);
    add(p + "attn.bo", 1, d);
    add(p + "ln2.g", 1, d);
    add(p + "ln2.b", 1, d);
    add(p + "mlp.w1", hidden, d);
    add(p + "mlp.b1", 1, hidden);
    add(p + "mlp.w2", d, hidden);
    add(p + "mlp.b2", 1, d);
  }
  add("lnf.g", 1, d);
  add("lnf.b", 1, d);
  add("unembed.w", c.vocab_size, d);
  add("unembed.b", 1, c.vocab_size);
}

const ParameterTensor& ParameterLayout::get(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw OutOfRange("no parameter tensor named '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Implementation details shared by forward, decoding and backward.

template <typename Scalar>
struct Transformer<Scalar>::Impl {
  using Matrix = RowMatrix<Scalar>;
  using CMap = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  static constexpr double kLnEps = 1e-5;

  struct LayerOffsets {
    std::size_t ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct Offsets {
    std::size_t frame_w, frame_b, mix, query, tok_emb, lnf_g, lnf_b, unembed_w, unembed_b;
    std::vector<LayerOffsets> layers;
  };

  static Offsets offsets(const ParameterLayout& layout, int n_layers) {
    Offsets o{};
    o.frame_w = layout.get("bridge.frame_w").offset;
    o.frame_b = layout.get("bridge.frame_b").offset;
    o.mix = layout.get("bridge.mix").offset;
    o.query = layout.get("bridge.query").offset;
    o.tok_emb = layout.get("tok_emb").offset;
    for (int l = 0; l < n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      o.layers.push_back({layout.get(p + "ln1.g").offset, layout.get(p + "ln1.b").offset,
                          layout.get(p + "attn.wqkv").offset, layout.get(p + "attn.bqkv").offset,
                          layout.get(p + "attn.wo").offset, layout.get(p + "attn.bo").offset,
                          layout.get(p + "ln2.g").offset, layout.get(p + "ln2.b").offset,
                          layout.get(p + "mlp.w1").offset, layout.get(p + "mlp.b1").offset,
                          layout.get(p + "mlp.w2").offset, layout.get(p + "mlp.b2").offset});
    }
    o.lnf_g = layout.get("lnf.g").offset;
    o.lnf_b = layout.get("lnf.b").offset;
    o.unembed_w = layout.get("unembed.w").offset;
    o.unembed_b = layout.get("unembed.b").offset;
    return o;
  }

  // Per-head intervention table.
  struct HeadPlan {
    bool ablate = false;
    const std::vector<double>* weights = nullptr;
    bool renormalize = false;
  };

  struct KvCache {
    Matrix k;  // [capacity, d], rotary already applied
    Matrix v;
  };

  struct LayerActs {
    Matrix x_in, a_hat, a, qkv, o, x_mid, b_hat, b, h_pre, h_act;
    Matrix drop_attn, drop_mlp;
    RowVec rstd1, rstd2;  // stored as row vectors of length T
    std::vector<Matrix> probs;
  };
  struct Acts {
    Matrix x0;
    std::vector<LayerActs> layers;
    Matrix y_hat, y;
    RowVec rstd_f;
  };

  const Transformer& m;
  const ModelConfig& c;
  Offsets off;
  Matrix rope_cos, rope_sin;  // [max_context, head_dim / 2]

  explicit Impl(const Transformer& model)
      : m(model), c(model.config_), off(offsets(*model.layout_, model.config_.n_layers)) {
    if (c.rope) {
      const int half = c.head_dim() / 2;
      rope_cos.resize(c.max_context, half);
      rope_sin.resize(c.max_context, half);
      for (int p = 0; p < c.max_context; ++p) {
        for (int i = 0; i < half; ++i) {
          const double theta = p * std::pow(10000.0, -2.0 * i / c.head_dim());
          rope_cos(p, i) = static_cast<Scalar>(std::cos(theta));
          rope_sin(p, i) = static_cast<Scalar>(std::sin(theta));
        }
      }
    }
  }

  CMap cmat(std::size_t offset, int rows, int cols) const { return CMap(m.params_.data() + offset, rows, cols); }
  static Map gmat(std::span<Scalar> g, std::size_t offset, int rows, int cols) {
    return Map(g.data() + offset, rows, cols);
  }

  std::vector<HeadPlan> plan(std::span<const Intervention> interventions, std::size_t seq_len) const {
    std::vector<HeadPlan> plans(static_cast<std::size_t>(c.num_heads_total()));
    std::vector<bool> used(plans.size(), false);
    for (const auto& iv : interventions) {
      if (iv.head.layer < 0 || iv.head.layer >= c.n_layers || iv.head.head < 0 || iv.head.head >= c.n_heads) {
        throw OutOfRange("intervention targets head (" + std::to_string(iv.head.layer) + ", " +
                         std::to_string(iv.head.head) + ") outside the model");
      }
      const auto idx = static_cast<std::size_t>(iv.head.layer * c.n_heads + iv.head.head);
      if (used[idx]) {
        throw InterventionConflict("more than one intervention on head (" + std::to_string(iv.head.layer) + ", " +
                                   std::to_string(iv.head.head) + ")");
      }
      used[idx] = true;
      if (iv.kind == InterventionKind::kAblateHead) {
        if (!iv.weights.empty()) throw InterventionConflict("ablation carries no weight vector");
        plans[idx].ablate = true;
      } else {
        if (iv.weights.size() > seq_len) {
          throw ShapeError("weight vector of length " + std::to_string(iv.weights.size()) +
                           " exceeds the sequence length " + std::to_string(seq_len));
        }
        for (double w : iv.weights) {
          if (!(w >= 0) || !std::isfinite(w)) throw PlanError("attention weights must be finite and >= 0");
        }
        plans[idx].weights = &iv.weights;
        plans[idx].renormalize = iv.renormalize_rows;
      }
    }
    return plans;
  }

  // Row-wise layer norm. Writes the normalized input into `hat` when given.
  void layer_norm(const Matrix& x, std::size_t g_off, std::size_t b_off, Matrix& out, Matrix* hat,
                  RowVec* rstd) const {
    if (!c.layer_norm) {
      out = x;
      return;
    }
    const int d = static_cast<int>(x.cols());
    auto g = cmat(g_off, 1, d);
    auto b = cmat(b_off, 1, d);
    out.resize(x.rows(), d);
    if (hat) hat->resize(x.rows(), d);
    if (rstd) rstd->resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar mu = x.row(r).mean();
      const Scalar var = (x.row(r).array() - mu).square().mean();
      const Scalar rs = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLnEps));
      RowVec h = (x.row(r).array() - mu) * rs;
      out.row(r) = h.array() * g.array() + b.array();
      if (hat) hat->row(r) = h;
      if (rstd) (*rstd)(r) = rs;
    }
  }

  // Column sums accumulated row by row, independent of buffer alignment.
  template <typename Dst, typename Src>
  static void add_column_sums(Dst&& dst, const Src& src) {
    for (Eigen::Index r = 0; r < src.rows(); ++r) dst.row(0) += src.row(r);
  }

  void layer_norm_backward(const Matrix& dy, const Matrix& hat, const RowVec& rstd, std::size_t g_off,
                           std::size_t b_off, std::span<Scalar> grad, Matrix& dx) const {
    if (!c.layer_norm) {
      dx = dy;
      return;
    }
    const int d = static_cast<int>(dy.cols());
    auto g = cmat(g_off, 1, d);
    auto dg = gmat(grad, g_off, 1, d);
    auto db = gmat(grad, b_off, 1, d);
    add_column_sums(dg, Matrix(dy.array() * hat.array()));
    add_column_sums(db, dy);
    dx.resize(dy.rows(), d);
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      RowVec dh = dy.row(r).array() * g.array();
      const Scalar mean_dh = dh.mean();
      const Scalar mean_dh_h = (dh.array() * hat.row(r).array()).mean();
      dx.row(r) = rstd(r) * (dh.array() - mean_dh - hat.row(r).array() * mean_dh_h);
    }
  }

  void rope_apply(Eigen::Ref<Matrix> x, int start, bool inverse) const {
    if (!c.rope) return;
    const int hd = c.head_dim();
    const int half = hd / 2;
    const auto blocks = static_cast<int>(x.cols()) / hd;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const int pos = start + static_cast<int>(r);
      for (int h = 0; h < blocks; ++h) {
        Scalar* row = x.row(r).data() + h * hd;
        for (int i = 0; i < half; ++i) {
          const Scalar co = rope_cos(pos, i);
          const Scalar si = inverse ? -rope_sin(pos, i) : rope_sin(pos, i);
          const Scalar x1 = row[i];
          const Scalar x2 = row[i + half];
          row[i] = x1 * co - x2 * si;
          row[i + half] = x1 * si + x2 * co;
        }
      }
    }
  }

  static Scalar gelu(Scalar x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
    const Scalar u = static_cast<Scalar>(k) * (x + Scalar(0.044715) * x * x * x);
    return Scalar(0.5) * x * (Scalar(1) + std::tanh(u));
  }
  static Scalar gelu_grad(Scalar x) {
    constexpr double k = 0.7978845608028654;
    const Scalar u = static_cast<Scalar>(k) * (x + Scalar(0.044715) * x * x * x);
    const Scalar t = std::tanh(u);
    return Scalar(0.5) * (Scalar(1) + t) +
           Scalar(0.5) * x * (Scalar(1) - t * t) * static_cast<Scalar>(k) * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
  }

  Matrix bridge(const Event& e) const {
    if (e.frame_dim != c.d_v || e.num_frames() != kFramesPerEvent ||
        e.features.size() != static_cast<std::size_t>(kFramesPerEvent) * c.d_v) {
      throw ShapeError("event " + e.id + " has frames of width " + std::to_string(e.frame_dim) + " x " +
                       std::to_string(e.num_frames()) + ", model expects " + std::to_string(kFramesPerEvent) +
                       " x " + std::to_string(c.d_v));
    }
    Matrix x(kFramesPerEvent, c.d_v);
    for (int f = 0; f < kFramesPerEvent; ++f) {
      for (int k = 0; k < c.d_v; ++k) x(f, k) = static_cast<Scalar>(e.features[f * c.d_v + k]);
    }
    Matrix h = x * cmat(off.frame_w, c.d_model, c.d_v).transpose();
    h.rowwise() += cmat(off.frame_b, 1, c.d_model).row(0);
    Matrix out = cmat(off.mix, c.m_event, kFramesPerEvent) * h;
    out += cmat(off.query, c.m_event, c.d_model);
    return out;
  }

  // Embeds positions [start, start + count) of the context.
  Matrix embed(const ContextSequence& ctx, std::size_t start, std::size_t count) const {
    Matrix x(static_cast<Eigen::Index>(count), c.d_model);
    std::map<int, Matrix> bridged;
    auto tok = cmat(off.tok_emb, c.vocab_size, c.d_model);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& item = ctx.items[start + i];
      if (item.kind == ContextItem::Kind::kToken) {
        if (item.token < 0 || item.token >= c.vocab_size) {
          throw InvalidTokenId("token id " + std::to_string(item.token) + " outside the model vocabulary");
        }
        x.row(static_cast<Eigen::Index>(i)) = tok.row(item.token);
      } else {
        if (item.event < 0 || item.event >= static_cast<int>(ctx.events.size()) || item.slot < 0 ||
            item.slot >= c.m_event) {
          throw ShapeError("context references an invalid event slot");
        }
        auto it = bridged.find(item.event);
        if (it == bridged.end()) it = bridged.emplace(item.event, bridge(ctx.events[item.event])).first;
        x.row(static_cast<Eigen::Index>(i)) = it->second.row(item.slot);
      }
    }
    return x;
  }

  void init_caches(std::vector<KvCache>& caches, int capacity) const {
    caches.resize(static_cast<std::size_t>(c.n_layers));
    for (auto& kv : caches) {
      kv.k.resize(capacity, c.d_model);
      kv.v.resize(capacity, c.d_model);
    }
  }

  // Runs rows [start, start + x.rows()) through the stack. Keys and values of
  // earlier positions come from `caches`, which are extended in place.
  // Returns the final hidden state (before the final norm).
  Matrix run_layers(Matrix x, int start, std::vector<KvCache>& caches, const std::vector<HeadPlan>& plans,
                    std::vector<Matrix>* attention, Acts* acts, std::mt19937_64* rng) const {
    m.forward_passes_->fetch_add(1);
    const int n = static_cast<int>(x.rows());
    const int total = start + n;
    const int d = c.d_model;
    const int hd = c.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    const bool dropout = c.dropout > 0 && rng != nullptr;
    const Scalar keep = static_cast<Scalar>(1.0 - c.dropout);
    std::bernoulli_distribution keep_dist(1.0 - c.dropout);
    if (acts) acts->layers.resize(static_cast<std::size_t>(c.n_layers));

    for (int l = 0; l < c.n_layers; ++l) {
      const auto& lo = off.layers[static_cast<std::size_t>(l)];
      LayerActs* la = acts ? &acts->layers[static_cast<std::size_t>(l)] : nullptr;
      if (la) la->x_in = x;

      Matrix a;
      layer_norm(x, lo.ln1_g, lo.ln1_b, a, la ? &la->a_hat : nullptr, la ? &la->rstd1 : nullptr);
      Matrix qkv = a * cmat(lo.wqkv, 3 * d, d).transpose();
      qkv.rowwise() += cmat(lo.bqkv, 1, 3 * d).row(0);
      rope_apply(qkv.leftCols(2 * d), start, false);
      auto& kv = caches[static_cast<std::size_t>(l)];
      kv.k.middleRows(start, n) = qkv.middleCols(d, d);
      kv.v.middleRows(start, n) = qkv.rightCols(d);

      Matrix o = Matrix::Zero(n, d);
      if (la) la->probs.resize(static_cast<std::size_t>(c.n_heads));
      for (int h = 0; h < c.n_heads; ++h) {
        const auto& hp = plans[static_cast<std::size_t>(l * c.n_heads + h)];
        Matrix s = (qkv.block(0, h * hd, n, hd) * kv.k.block(0, h * hd, total, hd).transpose()) * scale;
        for (int r = 0; r < n; ++r) {
          const int limit = start + r;  // last visible key
          auto row = s.row(r);
          const Scalar mx = row.head(limit + 1).maxCoeff();
          Scalar sum = 0;
          for (int j = 0; j <= limit; ++j) {
            row(j) = std::exp(row(j) - mx);
            sum += row(j);
          }
          row.head(limit + 1) /= sum;
          if (limit + 1 < total) row.tail(total - limit - 1).setZero();
          if (hp.weights) {
            const auto& w = *hp.weights;
            const int nw = std::min<int>(static_cast<int>(w.size()), limit + 1);
            for (int j = 0; j < nw; ++j) row(j) *= static_cast<Scalar>(w[static_cast<std::size_t>(j)]);
            if (hp.renormalize) {
              const Scalar rs = row.head(limit + 1).sum();
              if (rs > 0) row.head(limit + 1) /= rs;
            }
          }
        }
        if (attention) {
          auto& dst = (*attention)[static_cast<std::size_t>(l * c.n_heads + h)];
          dst.block(start, 0, n, total) = s;
        }
        if (!hp.ablate) o.middleCols(h * hd, hd).noalias() = s * kv.v.block(0, h * hd, total, hd);
        if (la) la->probs[static_cast<std::size_t>(h)] = std::move(s);
      }

      Matrix branch = o * cmat(lo.wo, d, d).transpose();
      branch.rowwise() += cmat(lo.bo, 1, d).row(0);
      if (dropout) {
        Matrix mask(n, d);
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep_dist(*rng) ? Scalar(1) / keep : Scalar(0);
        branch.array() *= mask.array();
        if (la) la->drop_attn = std::move(mask);
      }
      x += branch;
      if (la) {
        la->a = std::move(a);
        la->qkv = std::move(qkv);
        la->o = std::move(o);
        la->x_mid = x;
      }

      Matrix b;
      layer_norm(x, lo.ln2_g, lo.ln2_b, b, la ? &la->b_hat : nullptr, la ? &la->rstd2 : nullptr);
      const int hidden = c.mlp_ratio * d;
      Matrix h_pre = b * cmat(lo.w1, hidden, d).transpose();
      h_pre.rowwise() += cmat(lo.b1, 1, hidden).row(0);
      Matrix h_act = h_pre.unaryExpr([](Scalar v) { return gelu(v); });
      Matrix mlp = h_act * cmat(lo.w2, d, hidden).transpose();
      mlp.rowwise() += cmat(lo.b2, 1, d).row(0);
      if (dropout) {
        Matrix mask(n, d);
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep_dist(*rng) ? Scalar(1) / keep : Scalar(0);
        mlp.array() *= mask.array();
        if (la) la->drop_mlp = std::move(mask);
      }
      x += mlp;
      if (la) {
        la->b = std::move(b);
        la->h_pre = std::move(h_pre);
        la->h_act = std::move(h_act);
      }
    }
    return x;
  }

  Matrix logits_from_hidden(const Matrix& x, Acts* acts) const {
    Matrix y;
    layer_norm(x, off.lnf_g, off.lnf_b, y, acts ? &acts->y_hat : nullptr, acts ? &acts->rstd_f : nullptr);
    Matrix logits = y * cmat(off.unembed_w, c.vocab_size, c.d_model).transpose();
    logits.rowwise() += cmat(off.unembed_b, 1, c.vocab_size).row(0);
    if (acts) acts->y = std::move(y);
    return logits;
  }

  void check_length(std::size_t len) const {
    if (len > static_cast<std::size_t>(c.max_context)) {
      throw ContextTooLong("sequence of " + std::to_string(len) + " positions exceeds max_context " +
                           std::to_string(c.max_context));
    }
  }
};

// ---------------------------------------------------------------------------

template <typename Scalar>
Transformer<Scalar>::Transformer(const ModelConfig& config) : Transformer(config, true) {}

template <typename Scalar>
Transformer<Scalar> Transformer<Scalar>::zeros(const ModelConfig& config) {
  return Transformer(config, false);
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const ModelConfig& config, bool random_init)
    : config_(config), forward_passes_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  config_.validate();
  layout_ = std::make_shared<const ParameterLayout>(config_);
  params_.assign(layout_->total(), Scalar(0));
  if (!random_init) return;
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double base = 0.02;
  const double residual = base / std::sqrt(2.0 * config_.n_layers);
  for (const auto& t : layout_->tensors()) {
    auto* p = params_.data() + t.offset;
    const std::string& n = t.name;
    auto ends_with = [&](std::string_view suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".g")) {
      std::fill(p, p + t.size(), Scalar(1));
    } else if (n == "bridge.mix") {
      std::fill(p, p + t.size(), static_cast<Scalar>(1.0 / kFramesPerEvent));
    } else if (ends_with(".b") || ends_with("_b") || ends_with("bqkv") || ends_with(".bo") || ends_with(".b1") ||
               ends_with(".b2")) {
      // biases start at zero
    } else {
      const double stdev = (ends_with("attn.wo") || ends_with("mlp.w2")) ? residual : base;
      for (std::size_t i = 0; i < t.size(); ++i) p[i] = static_cast<Scalar>(stdev * normal(rng));
    }
  }
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const Transformer& other)
    : config_(other.config_),
      layout_(other.layout_),
      params_(other.params_),
      forward_passes_(std::make_unique<std::atomic<std::uint64_t>>(0)) {}

template <typename Scalar>
Transformer<Scalar>& Transformer<Scalar>::operator=(const Transformer& other) {
  if (this != &other) {
    config_ = other.config_;
    layout_ = other.layout_;
    params_ = other.params_;
    forward_passes_ = std::make_unique<std::atomic<std::uint64_t>>(0);
  }
  return *this;
}

template <typename Scalar>
Transformer<Scalar>::~Transformer() = default;

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> Transformer<Scalar>::tensor(std::string_view name) {
  const auto& t = layout_->get(name);
  return Eigen::Map<Matrix>(params_.data() + t.offset, t.rows, t.cols);
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> Transformer<Scalar>::tensor(std::string_view name) const {
  const auto& t = layout_->get(name);
  return Eigen::Map<const Matrix>(params_.data() + t.offset, t.rows, t.cols);
}

template <typename Scalar>
template <typename Other>
Transformer<Other> Transformer<Scalar>::cast() const {
  Transformer<Other> out(config_, false);
  for (std::size_t i = 0; i < params_.size(); ++i) out.params_[i] = static_cast<Other>(params_[i]);
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> Transformer<Scalar>::bridge_event(const Event& event) const {
  return Impl(*this).bridge(event);
}

template <typename Scalar>
ForwardTrace<Scalar> Transformer<Scalar>::forward(const ContextSequence& context,
                                                  std::span<const Intervention> interventions,
                                                  bool keep_attention) const {
  Impl impl(*this);
  const auto T = context.size();
  impl.check_length(T);
  ForwardTrace<Scalar> trace;
  if (T == 0) {
    trace.logits.resize(0, config_.vocab_size);
    return trace;
  }
  const auto plans = impl.plan(interventions, T);
  std::vector<typename Impl::KvCache> caches;
  impl.init_caches(caches, static_cast<int>(T));
  if (keep_attention) {
    trace.attention.assign(static_cast<std::size_t>(config_.num_heads_total()),
                           Matrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(T)));
  }
  Matrix x = impl.embed(context, 0, T);
  x = impl.run_layers(std::move(x), 0, caches, plans, keep_attention ? &trace.attention : nullptr, nullptr, nullptr);
  trace.logits = impl.logits_from_hidden(x, nullptr);
  return trace;
}

namespace {

template <typename Derived>
double log_softmax_at(const Eigen::MatrixBase<Derived>& row, Eigen::Index idx) {
  const double mx = static_cast<double>(row.maxCoeff());
  double sum = 0;
  for (Eigen::Index j = 0; j < row.size(); ++j) sum += std::exp(static_cast<double>(row(j)) - mx);
  return static_cast<double>(row(idx)) - mx - std::log(sum);
}

}  // namespace

template <typename Scalar>
std::vector<double> Transformer<Scalar>::narration_token_logprobs(const ContextSequence& context,
                                                                  const Narration& narration,
                                                                  std::span<const Intervention> interventions) const {
  if (context.size() == 0) throw ShapeError("narration_logprob needs a non-empty context");
  ContextSequence seq = context;
  for (TokenId id : narration.token_ids) {
    if (id < 0 || id >= config_.vocab_size) throw InvalidTokenId("narration token outside the vocabulary");
    seq.push_token(id, SegmentTag::kTarget);
  }
  // The last narration token predicts nothing we score; drop it from the pass.
  ContextSequence input = seq;
  if (!narration.token_ids.empty()) {
    input.items.pop_back();
    input.segments.pop_back();
    input.entry.pop_back();
    input.credibility.pop_back();
  }
  auto trace = forward(input, interventions, false);
  std::vector<double> out;
  out.reserve(narration.token_ids.size());
  const std::size_t first = context.size() - 1;
  for (std::size_t i = 0; i < narration.token_ids.size(); ++i) {
    out.push_back(log_softmax_at(trace.logits.row(static_cast<Eigen::Index>(first + i)), narration.token_ids[i]));
  }
  return out;
}

template <typename Scalar>
double Transformer<Scalar>::narration_logprob(const ContextSequence& context, const Narration& narration,
                                              std::span<const Intervention> interventions) const {
  double total = 0;
  for (double v : narration_token_logprobs(context, narration, interventions)) total += v;
  return total;
}

// ---------------------------------------------------------------------------
// Incremental decoding over a shared prefix.

template <typename Scalar>
Narration Transformer<Scalar>::greedy_narration(const ContextSequence& context, const Vocabulary& vocab, int max_len,
                                                std::span<const Intervention> interventions) const {
  auto draws = sample_narrations(context, vocab, 1, 0.0, 0, max_len, interventions);
  return std::move(draws.front());
}

template <typename Scalar>
Narration Transformer<Scalar>::sample_narration(const ContextSequence& context, const Vocabulary& vocab,
                                                double temperature, std::uint64_t seed, int max_len,
                                                std::span<const Intervention> interventions) const {
  if (!(temperature > 0)) throw ConfigError("sampling temperature must be > 0");
  auto draws = sample_narrations(context, vocab, 1, temperature, seed, max_len, interventions);
  return std::move(draws.front());
}

template <typename Scalar>
std::vector<Narration> Transformer<Scalar>::sample_narrations(const ContextSequence& context,
                                                              const Vocabulary& vocab, int count,
                                                              double temperature, std::uint64_t seed, int max_len,
                                                              std::span<const Intervention> interventions) const {
  if (static_cast<int>(vocab.size()) != config_.vocab_size) {
    throw CheckpointMismatch("vocabulary size does not match the model");
  }
  if (context.size() == 0) throw ShapeError("decoding needs a non-empty context");
  if (count < 1) throw ConfigError("sample count must be >= 1");
  if (temperature < 0) throw ConfigError("sampling temperature must be >= 0");
  Impl impl(*this);
  const int T = static_cast<int>(context.size());
  impl.check_length(static_cast<std::size_t>(T));
  const auto plans = impl.plan(interventions, context.size());
  const TokenId end_id = Vocabulary::special(Special::kNarrationEnd);

  struct State {
    std::vector<typename Impl::KvCache> caches;
    int length = 0;
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> logits;
  };
  State prefix;
  impl.init_caches(prefix.caches, config_.max_context);
  {
    Matrix x = impl.embed(context, 0, static_cast<std::size_t>(T));
    x = impl.run_layers(std::move(x), 0, prefix.caches, plans, nullptr, nullptr, nullptr);
    Matrix last = x.bottomRows(1);
    prefix.logits = impl.logits_from_hidden(last, nullptr).row(0);
    prefix.length = T;
  }

  auto tok = impl.cmat(impl.off.tok_emb, config_.vocab_size, config_.d_model);
  std::vector<Narration> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    State st = (s + 1 == count) ? std::move(prefix) : prefix;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<TokenId> ids;
    for (int step = 0; step < max_len + 1; ++step) {
      // Allowed: words and narration-end.
      TokenId choice = end_id;
      if (step < max_len) {
        std::vector<double> lp(static_cast<std::size_t>(config_.vocab_size), -std::numeric_limits<double>::infinity());
        for (TokenId v = 0; v < config_.vocab_size; ++v) {
          if (v == end_id || vocab.is_word(v)) lp[static_cast<std::size_t>(v)] = static_cast<double>(st.logits(v));
        }
        if (temperature == 0) {
          choice = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        } else {
          const double mx = *std::max_element(lp.begin(), lp.end());
          double sum = 0;
          for (auto& v : lp) {
            v = std::isfinite(v) ? std::exp((v - mx) / temperature) : 0.0;
            sum += v;
          }
          double u = unit(rng) * sum;
          choice = end_id;
          for (TokenId v = 0; v < config_.vocab_size; ++v) {
            if (lp[static_cast<std::size_t>(v)] <= 0) continue;
            choice = v;
            u -= lp[static_cast<std::size_t>(v)];
            if (u < 0) break;
          }
        }
      }
      if (choice == end_id) break;
      ids.push_back(choice);
      if (static_cast<int>(ids.size()) == max_len) break;
      impl.check_length(static_cast<std::size_t>(st.length + 1));
      Matrix x = tok.row(choice);
      x = impl.run_layers(std::move(x), st.length, st.caches, plans, nullptr, nullptr, nullptr);
      st.logits = impl.logits_from_hidden(x, nullptr).row(0);
      ++st.length;
    }
    out.push_back(Narration::from_ids(std::move(ids), vocab, NarrationOrigin::kGenerated));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training: masked cross-entropy with full backward pass.

template <typename Scalar>
double Transformer<Scalar>::loss_and_gradient(const ContextSequence& sequence, std::span<const std::uint8_t> loss_mask,
                                              std::span<Scalar> grad, double grad_scale,
                                              std::mt19937_64* dropout_rng) const {
  using Acts = typename Impl::Acts;
  Impl impl(*this);
  const int T = static_cast<int>(sequence.size());
  impl.check_length(static_cast<std::size_t>(T));
  if (loss_mask.size() != sequence.size()) throw ShapeError("loss mask length differs from the sequence length");
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer has the wrong size");
  std::vector<int> targets(static_cast<std::size_t>(T), -1);
  int n_mask = 0;
  for (int p = 0; p < T; ++p) {
    if (!loss_mask[static_cast<std::size_t>(p)]) continue;
    if (p + 1 >= T || sequence.items[static_cast<std::size_t>(p + 1)].kind != ContextItem::Kind::kToken) {
      throw ShapeError("loss mask position " + std::to_string(p) + " has no next token to predict");
    }
    targets[static_cast<std::size_t>(p)] = sequence.items[static_cast<std::size_t>(p + 1)].token;
    ++n_mask;
  }
  if (n_mask == 0) throw ShapeError("loss mask selects no positions");

  const auto plans = impl.plan({}, sequence.size());
  std::vector<typename Impl::KvCache> caches;
  impl.init_caches(caches, T);
  Acts acts;
  acts.x0 = impl.embed(sequence, 0, static_cast<std::size_t>(T));
  Matrix x = impl.run_layers(acts.x0, 0, caches, plans, nullptr, &acts, dropout_rng);
  Matrix logits = impl.logits_from_hidden(x, &acts);

  const int V = config_.vocab_size;
  const int d = config_.d_model;
  const int hd = config_.head_dim();
  const int hidden = config_.mlp_ratio * d;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  double loss = 0;
  Matrix dlogits = Matrix::Zero(T, V);
  const Scalar coeff = static_cast<Scalar>(grad_scale / n_mask);
  for (int p = 0; p < T; ++p) {
    const int tgt = targets[static_cast<std::size_t>(p)];
    if (tgt < 0) continue;
    auto row = logits.row(p);
    const Scalar mx = row.maxCoeff();
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> e = (row.array() - mx).exp();
    const Scalar sum = e.sum();
    loss += -(static_cast<double>(row(tgt) - mx) - std::log(static_cast<double>(sum)));
    dlogits.row(p) = e / sum * coeff;
    dlogits(p, tgt) -= coeff;
  }
  loss /= n_mask;
  if (!std::isfinite(loss)) return loss;

  // Output head.
  const auto& off = impl.off;
  auto gmat = [&](std::size_t o, int r, int cc) { return Impl::gmat(grad, o, r, cc); };
  gmat(off.unembed_w, V, d).noalias() += dlogits.transpose() * acts.y;
  impl.add_column_sums(gmat(off.unembed_b, 1, V), dlogits);
  Matrix dy = dlogits * impl.cmat(off.unembed_w, V, d);
  Matrix dx;
  impl.layer_norm_backward(dy, acts.y_hat, acts.rstd_f, off.lnf_g, off.lnf_b, grad, dx);

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const auto& lo = off.layers[static_cast<std::size_t>(l)];
    auto& la = acts.layers[static_cast<std::size_t>(l)];

    // MLP branch.
    Matrix dbranch = dx;
    if (la.drop_mlp.size()) dbranch.array() *= la.drop_mlp.array();
    gmat(lo.w2, d, hidden).noalias() += dbranch.transpose() * la.h_act;
    impl.add_column_sums(gmat(lo.b2, 1, d), dbranch);
    Matrix dh = dbranch * impl.cmat(lo.w2, d, hidden);
    for (Eigen::Index i = 0; i < dh.size(); ++i) dh.data()[i] *= Impl::gelu_grad(la.h_pre.data()[i]);
    gmat(lo.w1, hidden, d).noalias() += dh.transpose() * la.b;
    impl.add_column_sums(gmat(lo.b1, 1, hidden), dh);
    Matrix db_ln = dh * impl.cmat(lo.w1, hidden, d);
    Matrix dmid;
    impl.layer_norm_backward(db_ln, la.b_hat, la.rstd2, lo.ln2_g, lo.ln2_b, grad, dmid);
    dmid += dx;

    // Attention branch.
    Matrix dab = dmid;
    if (la.drop_attn.size()) dab.array() *= la.drop_attn.array();
    gmat(lo.wo, d, d).noalias() += dab.transpose() * la.o;
    impl.add_column_sums(gmat(lo.bo, 1, d), dab);
    Matrix dO = dab * impl.cmat(lo.wo, d, d);
    Matrix dqkv = Matrix::Zero(T, 3 * d);
    for (int h = 0; h < config_.n_heads; ++h) {
      const Matrix& P = la.probs[static_cast<std::size_t>(h)];
      auto q = la.qkv.block(0, h * hd, T, hd);
      auto k = la.qkv.block(0, d + h * hd, T, hd);
      auto v = la.qkv.block(0, 2 * d + h * hd, T, hd);
      auto dOh = dO.block(0, h * hd, T, hd);
      Matrix dP = dOh * v.transpose();
      dqkv.block(0, 2 * d + h * hd, T, hd).noalias() = P.transpose() * dOh;
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = (dP.array() * P.array()).rowwise().sum();
      Matrix dS = P.array() * (dP.colwise() - rowdot).array();
      dS *= scale;
      dqkv.block(0, h * hd, T, hd).noalias() = dS * k;
      dqkv.block(0, d + h * hd, T, hd).noalias() = dS.transpose() * q;
    }
    impl.rope_apply(dqkv.leftCols(2 * d), 0, true);
    gmat(lo.wqkv, 3 * d, d).noalias() += dqkv.transpose() * la.a;
    impl.add_column_sums(gmat(lo.bqkv, 1, 3 * d), dqkv);
    Matrix da = dqkv * impl.cmat(lo.wqkv, 3 * d, d);
    Matrix dxin;
    impl.layer_norm_backward(da, la.a_hat, la.rstd1, lo.ln1_g, lo.ln1_b, grad, dxin);
    dx = dxin + dmid;
  }

  // Embeddings and bridge.
  auto dtok = gmat(off.tok_emb, V, d);
  std::map<int, Matrix> devent;
  for (int p = 0; p < T; ++p) {
    const auto& item = sequence.items[static_cast<std::size_t>(p)];
    if (item.kind == ContextItem::Kind::kToken) {
      dtok.row(item.token) += dx.row(p);
    } else {
      auto it = devent.find(item.event);
      if (it == devent.end()) it = devent.emplace(item.event, Matrix::Zero(config_.m_event, d)).first;
      it->second.row(item.slot) += dx.row(p);
    }
  }
  for (const auto& [ev, dout] : devent) {
    const Event& e = sequence.events[static_cast<std::size_t>(ev)];
    Matrix xf(kFramesPerEvent, config_.d_v);
    for (int f = 0; f < kFramesPerEvent; ++f) {
      for (int k2 = 0; k2 < config_.d_v; ++k2) xf(f, k2) = static_cast<Scalar>(e.features[f * config_.d_v + k2]);
    }
    Matrix hfr = xf * impl.cmat(off.frame_w, d, config_.d_v).transpose();
    hfr.rowwise() += impl.cmat(off.frame_b, 1, d).row(0);
    gmat(off.query, config_.m_event, d) += dout;
    gmat(off.mix, config_.m_event, kFramesPerEvent).noalias() += dout * hfr.transpose();
    Matrix dhf = impl.cmat(off.mix, config_.m_event, kFramesPerEvent).transpose() * dout;
    gmat(off.frame_w, d, config_.d_v).noalias() += dhf.transpose() * xf;
    impl.add_column_sums(gmat(off.frame_b, 1, d), dhf);
  }
  return loss;
}

template class Transformer<float>;
template class Transformer<double>;
template Transformer<double> Transformer<float>::cast<double>() const;
template Transformer<float> Transformer<double>::cast<float>() const;
template Transformer<float> Transformer<float>::cast<float>() const;
template Transformer<double> Transformer<double>::cast<double>() const;

}  // namespace cameo
