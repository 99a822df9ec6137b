#include <gtest/gtest.h>

#include <set>

#include "cameo/core.hpp"
#include "cameo/util.hpp"
#include "cameo/world.hpp"

namespace cameo {
namespace {

TEST(Vocabulary, IdsAreDenseAndSpecialsDistinct) {
  const auto vocab = world_vocabulary();
  std::set<std::string> seen;
  for (TokenId id = 0; id < static_cast<TokenId>(vocab.size()); ++id) {
    EXPECT_EQ(vocab.id(vocab.token(id)), id);
    EXPECT_TRUE(seen.insert(vocab.token(id)).second);
  }
  for (TokenId id = 0; id < kNumSpecials; ++id) {
    EXPECT_TRUE(vocab.is_special(id));
    EXPECT_FALSE(vocab.is_word(id));
  }
  EXPECT_GE(vocab.size(), 40u);
  EXPECT_LE(vocab.size(), 120u);
}

TEST(Vocabulary, DuplicateOrSpecialLookingWordsAreRejected) {
  EXPECT_THROW(Vocabulary({"a", "a"}), ConfigError);
  const Vocabulary v({"a", "b"});
  EXPECT_THROW(v.id("zebra"), UnknownToken);
  EXPECT_FALSE(v.find("zebra").has_value());
  EXPECT_THROW(v.token(static_cast<TokenId>(v.size())), InvalidTokenId);
  EXPECT_THROW(v.token(-1), InvalidTokenId);
}

TEST(Vocabulary, HashIdentifiesTokenOrder) {
  EXPECT_EQ(Vocabulary({"a", "b"}).hash(), Vocabulary({"a", "b"}).hash());
  EXPECT_NE(Vocabulary({"a", "b"}).hash(), Vocabulary({"b", "a"}).hash());
}

TEST(Tokenize, NormalizesCaseAndWhitespace) {
  EXPECT_EQ(normalize("  C   Picks UP\tthe  knife "), "c picks up the knife");
  EXPECT_EQ(normalize(""), "");
  EXPECT_EQ(normalize(" \n "), "");
}

TEST(Tokenize, EmptyInputs) {
  const auto vocab = world_vocabulary();
  EXPECT_TRUE(tokenize("", vocab).empty());
  EXPECT_EQ(detokenize(std::vector<TokenId>{}, vocab), "");
}

TEST(Tokenize, RoundTripsEveryGrammarSentence) {
  const auto vocab = world_vocabulary();
  for (std::size_t a = 0; a < grammar_actions().size(); ++a) {
    for (std::size_t o = 0; o < grammar_objects().size(); ++o) {
      const auto text = narration_text(static_cast<int>(a), static_cast<int>(o));
      ASSERT_EQ(detokenize(tokenize(text, vocab), vocab), normalize(text));
      std::string shouted = text;
      for (auto& ch : shouted) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      ASSERT_EQ(detokenize(tokenize("  " + shouted + " ", vocab), vocab), text);
    }
  }
}

TEST(Tokenize, UnknownWordsAndBadIds) {
  const auto vocab = world_vocabulary();
  EXPECT_THROW(tokenize("c juggles the knife", vocab), UnknownToken);
  const std::vector<TokenId> bad = {vocab.id("c"), static_cast<TokenId>(vocab.size())};
  EXPECT_THROW(detokenize(bad, vocab), InvalidTokenId);
}

TEST(Tokenize, DetokenizeStripsSpecials) {
  const auto vocab = world_vocabulary();
  const std::vector<TokenId> ids = {Vocabulary::special(Special::kNarrationBegin), vocab.id("c"),
                                    vocab.id("knife"), Vocabulary::special(Special::kNarrationEnd)};
  EXPECT_EQ(detokenize(ids, vocab), "c knife");
}

TEST(Narration, TextAndIdsAgree) {
  const auto vocab = world_vocabulary();
  const auto n = Narration::from_text("c picks up the knife", vocab);
  EXPECT_EQ(n.origin, NarrationOrigin::kGroundTruth);
  const auto back = Narration::from_ids(n.token_ids, vocab);
  EXPECT_EQ(back.text, n.text);
  EXPECT_EQ(back.origin, NarrationOrigin::kGenerated);
}

TEST(Event, ValidateChecksShape) {
  Event e;
  e.id = "x/0";
  e.frame_dim = 4;
  e.features.assign(kFramesPerEvent * 4, 0.0f);
  EXPECT_NO_THROW(e.validate());
  EXPECT_EQ(e.num_frames(), kFramesPerEvent);
  e.features.pop_back();
  EXPECT_THROW(e.validate(), ShapeError);
  e.features.assign((kFramesPerEvent + 1) * 4, 0.0f);
  EXPECT_THROW(e.validate(), ShapeError);
}

TEST(Episode, ValidateChecksIndices) {
  WorldConfig wc;
  auto corpus = generate_corpus(wc, 2, 1, 1);
  auto ep = corpus.train[0];
  EXPECT_NO_THROW(ep.validate());
  std::swap(ep.steps[0], ep.steps[1]);
  EXPECT_THROW(ep.validate(), CorpusFormatError);
  Episode empty;
  empty.id = "e";
  EXPECT_THROW(empty.validate(), CorpusFormatError);
}

TEST(Util, Base64AndFloatsRoundTrip) {
  const std::vector<std::uint8_t> bytes = {0, 1, 2, 250, 251, 255, 7};
  for (std::size_t n = 0; n <= bytes.size(); ++n) {
    const std::span<const std::uint8_t> s(bytes.data(), n);
    EXPECT_EQ(util::base64_decode(util::base64_encode(s)), std::vector<std::uint8_t>(s.begin(), s.end()));
  }
  EXPECT_EQ(util::base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}), "TWFu");
  const std::vector<float> f = {0.0f, -1.5f, 3.25e-7f, 1e30f};
  EXPECT_EQ(util::decode_floats(util::encode_floats(f)), f);
  EXPECT_THROW(util::base64_decode("@@@@"), CorpusFormatError);
}

TEST(Util, Crc32KnownValue) {
  EXPECT_EQ(util::crc32("123456789"), 0xCBF43926u);
  EXPECT_EQ(util::hex32(0xCBF43926u), "cbf43926");
}

TEST(Util, ParallelForCoversRangeAndRethrows) {
  std::vector<int> hits(100, 0);
  util::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(util::parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw ShapeError("boom");
               }),
               ShapeError);
}

}  // namespace
}  // namespace cameo
