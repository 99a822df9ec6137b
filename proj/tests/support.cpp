#include "support.hpp"

namespace cameo::testing {

Model planted_copy_model(const Vocabulary& vocab, double beta, double key_scale) {
  ModelConfig mc;
  mc.d_model = 64;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.d_v = 8;
  mc.m_event = 4;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.rope = false;
  mc.layer_norm = false;
  auto m = Model::zeros(mc);
  const int d = mc.d_model, hd = mc.head_dim();
  auto emb = m.tensor("tok_emb");
  auto unemb = m.tensor("unembed.w");
  for (int t = 0; t < mc.vocab_size; ++t) {
    emb(t, t) = 1.0f;
    unemb(t, t) = 1.0f;
  }
  auto wqkv = m.tensor("layer0.attn.wqkv");
  auto bqkv = m.tensor("layer0.attn.bqkv");
  auto wo = m.tensor("layer0.attn.wo");
  bqkv(0, hd) = 1.0f;  // constant query for head 1
  const auto& objects = grammar_objects();
  for (std::size_t j = 0; j < objects.size(); ++j) {
    const TokenId id = vocab.id(objects[j]);
    const int slot = hd + static_cast<int>(j);
    wqkv(d + hd, id) = static_cast<float>(key_scale);
    wqkv(2 * d + slot, id) = 1.0f;
    wo(id, slot) = static_cast<float>(beta);
  }
  return m;
}

std::vector<Episode> single_object_episodes(const Vocabulary& vocab, int n_episodes, int length, int frame_dim) {
  std::vector<Episode> out;
  const auto& objects = grammar_objects();
  for (int e = 0; e < n_episodes; ++e) {
    Episode ep;
    ep.id = "ep-" + std::to_string(100 + e);
    const std::string text = "c washes the " + objects[static_cast<std::size_t>(e) % objects.size()];
    for (int i = 0; i < length; ++i) {
      EpisodeStep s;
      s.event = make_event(ep.id, i, frame_dim, static_cast<std::uint64_t>(e * 1000 + i));
      s.narration = Narration::from_text(text, vocab);
      ep.steps.push_back(std::move(s));
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace cameo::testing
