#pragma once

// Shared fixtures: an independent loop-based reference forward pass and a
// few hand-wired models.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cameo/memory.hpp"
#include "cameo/model.hpp"
#include "cameo/world.hpp"

namespace cameo::testing {

using Mat = std::vector<std::vector<double>>;

struct ReferenceHeadEdit {
  bool ablate = false;
  std::vector<double> weights;  // empty = none
  bool renormalize = false;
};

// Straight-line re-implementation of the decoder from its parameter tensors.
// `edits` is keyed by layer * n_heads + head.
template <typename Scalar>
Mat reference_logits(const Transformer<Scalar>& m, const ContextSequence& ctx,
                     const std::map<int, ReferenceHeadEdit>& edits = {},
                     std::vector<Mat>* attention = nullptr) {
  const auto& c = m.config();
  const int d = c.d_model, T = static_cast<int>(ctx.size()), H = c.n_heads, hd = d / H;
  auto P = [&](const std::string& name, int r, int col) {
    return static_cast<double>(m.tensor(name)(r, col));
  };
  auto linear = [&](const std::vector<double>& x, const std::string& w, const std::string& b, int out) {
    std::vector<double> y(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      double s = P(b, 0, o);
      for (std::size_t i = 0; i < x.size(); ++i) s += P(w, o, static_cast<int>(i)) * x[i];
      y[static_cast<std::size_t>(o)] = s;
    }
    return y;
  };
  auto norm = [&](const std::vector<double>& x, const std::string& g, const std::string& b) {
    if (!c.layer_norm) return x;
    double mu = 0, var = 0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * P(g, 0, static_cast<int>(i)) + P(b, 0, static_cast<int>(i));
    }
    return y;
  };
  auto rotate = [&](std::vector<double>& v, int pos) {
    if (!c.rope) return;
    for (int h = 0; h < H; ++h) {
      for (int i = 0; i < hd / 2; ++i) {
        const double th = pos * std::pow(10000.0, -2.0 * i / hd);
        const double a = v[static_cast<std::size_t>(h * hd + i)], b = v[static_cast<std::size_t>(h * hd + i + hd / 2)];
        v[static_cast<std::size_t>(h * hd + i)] = a * std::cos(th) - b * std::sin(th);
        v[static_cast<std::size_t>(h * hd + i + hd / 2)] = a * std::sin(th) + b * std::cos(th);
      }
    }
  };

  // Embeddings.
  Mat x(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (int t = 0; t < T; ++t) {
    const auto& item = ctx.items[static_cast<std::size_t>(t)];
    auto& row = x[static_cast<std::size_t>(t)];
    if (item.kind == ContextItem::Kind::kToken) {
      for (int k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] = P("tok_emb", item.token, k);
    } else {
      const Event& e = ctx.events[static_cast<std::size_t>(item.event)];
      for (int f = 0; f < kFramesPerEvent; ++f) {
        const double mix = P("bridge.mix", item.slot, f);
        for (int k = 0; k < d; ++k) {
          double h = P("bridge.frame_b", 0, k);
          for (int j = 0; j < c.d_v; ++j) h += P("bridge.frame_w", k, j) * e.features[static_cast<std::size_t>(f * c.d_v + j)];
          row[static_cast<std::size_t>(k)] += mix * h;
        }
      }
      for (int k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] += P("bridge.query", item.slot, k);
    }
  }

  if (attention) attention->assign(static_cast<std::size_t>(c.n_layers * H), Mat(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(T), 0.0)));
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Mat q(static_cast<std::size_t>(T)), k(static_cast<std::size_t>(T)), v(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      auto a = norm(x[static_cast<std::size_t>(t)], p + "ln1.g", p + "ln1.b");
      auto qkv = linear(a, p + "attn.wqkv", p + "attn.bqkv", 3 * d);
      q[static_cast<std::size_t>(t)].assign(qkv.begin(), qkv.begin() + d);
      k[static_cast<std::size_t>(t)].assign(qkv.begin() + d, qkv.begin() + 2 * d);
      v[static_cast<std::size_t>(t)].assign(qkv.begin() + 2 * d, qkv.end());
      rotate(q[static_cast<std::size_t>(t)], t);
      rotate(k[static_cast<std::size_t>(t)], t);
    }
    Mat o(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(d), 0.0));
    for (int h = 0; h < H; ++h) {
      const auto it = edits.find(l * H + h);
      for (int t = 0; t < T; ++t) {
        std::vector<double> s(static_cast<std::size_t>(t + 1));
        double mx = -1e300;
        for (int j = 0; j <= t; ++j) {
          double dot = 0;
          for (int i = 0; i < hd; ++i) dot += q[static_cast<std::size_t>(t)][static_cast<std::size_t>(h * hd + i)] * k[static_cast<std::size_t>(j)][static_cast<std::size_t>(h * hd + i)];
          s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[static_cast<std::size_t>(j)]);
        }
        double z = 0;
        for (auto& val : s) z += (val = std::exp(val - mx));
        for (auto& val : s) val /= z;
        if (it != edits.end() && !it->second.weights.empty()) {
          const auto& w = it->second.weights;
          for (int j = 0; j <= t && j < static_cast<int>(w.size()); ++j) s[static_cast<std::size_t>(j)] *= w[static_cast<std::size_t>(j)];
          if (it->second.renormalize) {
            double rs = 0;
            for (double val : s) rs += val;
            if (rs > 0) for (auto& val : s) val /= rs;
          }
        }
        if (attention) {
          for (int j = 0; j <= t; ++j) (*attention)[static_cast<std::size_t>(l * H + h)][static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j)];
        }
        if (it != edits.end() && it->second.ablate) continue;
        for (int j = 0; j <= t; ++j) {
          for (int i = 0; i < hd; ++i) o[static_cast<std::size_t>(t)][static_cast<std::size_t>(h * hd + i)] += s[static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j)][static_cast<std::size_t>(h * hd + i)];
        }
      }
    }
    for (int t = 0; t < T; ++t) {
      auto att = linear(o[static_cast<std::size_t>(t)], p + "attn.wo", p + "attn.bo", d);
      for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] += att[static_cast<std::size_t>(i)];
      auto b = norm(x[static_cast<std::size_t>(t)], p + "ln2.g", p + "ln2.b");
      auto hpre = linear(b, p + "mlp.w1", p + "mlp.b1", c.mlp_ratio * d);
      for (auto& val : hpre) val = 0.5 * val * (1 + std::tanh(std::sqrt(2 / M_PI) * (val + 0.044715 * val * val * val)));
      auto mlp = linear(hpre, p + "mlp.w2", p + "mlp.b2", d);
      for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] += mlp[static_cast<std::size_t>(i)];
    }
  }
  Mat logits(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto y = norm(x[static_cast<std::size_t>(t)], "lnf.g", "lnf.b");
    logits[static_cast<std::size_t>(t)] = linear(y, "unembed.w", "unembed.b", c.vocab_size);
  }
  return logits;
}

template <typename Scalar>
double max_abs_diff(const RowMatrix<Scalar>& a, const Mat& b) {
  double m = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      m = std::max(m, std::abs(static_cast<double>(a(r, c)) - b[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
    }
  }
  return m;
}

template <typename A, typename B>
double max_abs_diff(const RowMatrix<A>& a, const RowMatrix<B>& b) {
  return (a.template cast<double>() - b.template cast<double>()).cwiseAbs().maxCoeff();
}

// Events with deterministic pseudo-random frames.
inline Event make_event(const std::string& episode, int index, int frame_dim, std::uint64_t seed) {
  Event e;
  e.episode_id = episode;
  e.index_in_episode = index;
  e.id = episode + "/" + std::to_string(index);
  e.frame_dim = frame_dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  e.features.resize(static_cast<std::size_t>(kFramesPerEvent * frame_dim));
  for (auto& v : e.features) v = n(rng);
  return e;
}

// Small corpus for fast tests.
inline Corpus tiny_corpus(std::uint64_t seed = 3, int n_train = 12, int n_val = 3, int n_test = 3) {
  WorldConfig wc;
  wc.seed = seed;
  wc.min_episode_len = 6;
  wc.max_episode_len = 9;
  return generate_corpus(wc, n_train, n_val, n_test);
}

inline ModelConfig tiny_model_config(const Corpus& corpus, int layers = 2, int heads = 2, int d = 16) {
  ModelConfig mc;
  mc.d_model = d;
  mc.n_layers = layers;
  mc.n_heads = heads;
  mc.d_v = corpus.world_config.frame_dim;
  mc.m_event = 2;
  mc.vocab_size = static_cast<int>(corpus.vocab.size());
  mc.max_context = 256;
  return mc;
}

// Fills every parameter with N(0, stdev) draws so gradients are not tiny.
template <typename Scalar>
void randomize(Transformer<Scalar>& m, double stdev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stdev);
  for (auto& p : m.parameters()) p = static_cast<Scalar>(n(rng));
}

// One layer, two heads, no rotary embedding and no layer norm. Head 1 puts
// (almost) all attention on positions holding object words and adds `beta`
// to that object's logit; head 0 has zero weights. Token embeddings and the
// unembedding are the identity on the first V residual dimensions.
Model planted_copy_model(const Vocabulary& vocab, double beta = 4.0, double key_scale = 40.0);

// Episodes in which every narration of episode e is "c washes the <object e>".
std::vector<Episode> single_object_episodes(const Vocabulary& vocab, int n_episodes, int length, int frame_dim);

}  // namespace cameo::testing
