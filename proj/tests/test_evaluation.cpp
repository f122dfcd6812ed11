#include <gtest/gtest.h>

#include "cfaug/evaluation.hpp"
#include "test_util.hpp"

using namespace cfaug;
using cfaug::testing::tiny_config;

namespace {

// Whole text negative if it contains a negative lexicon word, positive if it
// contains a positive one, neutral otherwise.
class LexiconJudge3 : public SentimentJudge3 {
 public:
  Polarity judge(std::string_view text) const override {
    bool neg = false, pos = false;
    for (const auto& w : split_words(text)) {
      neg = neg || is_negative_word(w);
      pos = pos || is_positive_word(w);
    }
    if (neg && !pos) return Polarity::kNegative;
    if (pos && !neg) return Polarity::kPositive;
    return Polarity::kNeutral;
  }
};

}  // namespace

TEST(Rouge, HandComputedScores) {
  const auto s = rouge("the cat sat on the mat", "the cat is on the mat");
  EXPECT_NEAR(s.r1.f1, 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(s.r2.f1, 3.0 / 5.0, 1e-12);
  EXPECT_NEAR(s.rl.f1, 5.0 / 6.0, 1e-12);
  EXPECT_FALSE(s.empty_reference);
}

TEST(Rouge, UnequalLengths) {
  // candidate 2 tokens, reference 4, one shared unigram
  const auto s = rouge("good soup", "the soup was cold");
  EXPECT_NEAR(s.r1.precision, 0.5, 1e-12);
  EXPECT_NEAR(s.r1.recall, 0.25, 1e-12);
  EXPECT_NEAR(s.r1.f1, 2 * 0.5 * 0.25 / 0.75, 1e-12);
  EXPECT_DOUBLE_EQ(s.r2.f1, 0.0);
}

TEST(Rouge, PunctuationAndCaseIgnored) {
  EXPECT_EQ(rouge_tokens("Great, food!"), (std::vector<std::string>{"great", "food"}));
  EXPECT_DOUBLE_EQ(rouge("Great food.", "great food").rl.f1, 1.0);
}

TEST(Rouge, EmptyInputs) {
  EXPECT_TRUE(rouge("something", "").empty_reference);
  EXPECT_TRUE(rouge("something", " . ! ").empty_reference);
  const auto s = rouge("", "a reference");
  EXPECT_FALSE(s.empty_reference);
  EXPECT_DOUBLE_EQ(s.r1.f1, 0.0);
}

TEST(Rouge, MeanIsFieldWise) {
  const auto m = mean_rouge({rouge("a b", "a b"), rouge("x", "a b"), rouge("q", "")});
  EXPECT_NEAR(m.r1.f1, 1.0 / 3.0, 1e-12);
  EXPECT_TRUE(m.empty_reference);
}

TEST(Sentences, Split) {
  EXPECT_EQ(split_sentences("Good food. Bad service! Why? 3.5 stars"),
            (std::vector<std::string>{"Good food.", "Bad service!", "Why?", "3.5 stars"}));
  EXPECT_TRUE(split_sentences("   ").empty());
}

TEST(SentimentPrecision, ReviewAndSentenceLevels) {
  LexiconJudge3 judge;
  const std::vector<std::string> summaries = {
      "The soup was terrible. The staff were rude.",   // rev 1, sen 1
      "The soup was great. The staff were rude.",      // rev neutral 0.5, sen (0 + 1) / 2
      "We went there on a tuesday.",                   // rev 0.5, sen 0.5
      "",                                              // empty
  };
  const auto r = sentiment_precision(summaries, judge, Polarity::kNegative);
  EXPECT_NEAR(r.review_level, (1 + 0.5 + 0.5 + 0) / 4.0, 1e-12);
  EXPECT_NEAR(r.sentence_level, (1 + 0.5 + 0.5 + 0) / 4.0, 1e-12);
  EXPECT_EQ(r.empty_summaries, 1u);
  EXPECT_DOUBLE_EQ(r.to_json()["Rev"].get<double>(), 50.0);

  const auto p = sentiment_precision({"Great food. Nice room."}, judge, Polarity::kPositive);
  EXPECT_DOUBLE_EQ(p.review_level, 1.0);
  EXPECT_THROW(sentiment_precision({"x"}, judge, Polarity::kNeutral), std::invalid_argument);
  EXPECT_DOUBLE_EQ(polarity_score(Polarity::kNeutral, Polarity::kPositive), 0.5);
}

TEST(Dif, ReferenceTableArithmetic) {
  // Negative products, base vs augmented summarizers, (Rev, Sen) in percent.
  EXPECT_NEAR(dif(58.0, 47.64, 84.88, 68.89), 24.1, 0.05);
  EXPECT_NEAR(dif(16.25, 16.40, 76.75, 58.34), 51.2, 0.05);
  EXPECT_DOUBLE_EQ(dif(10.0, 20.0, 30.0, 10.0), 5.0);

  SentimentReport base, aug;
  base.review_level = 0.58;
  base.sentence_level = 0.4764;
  aug.review_level = 0.8488;
  aug.sentence_level = 0.6889;
  EXPECT_NEAR(dif(base, aug), 24.1, 0.05);
  EXPECT_NEAR(dif(aug, base), -24.1, 0.05);
}

TEST(Evaluation, ReportJson) {
  EvaluationReport r;
  EXPECT_TRUE(r.to_json().empty());
  r.rouge = rouge("a b", "a b");
  r.dif = 3.5;
  const auto j = r.to_json();
  EXPECT_DOUBLE_EQ(j["rouge"]["RL"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(j["Dif"].get<double>(), 3.5);
}

TEST(Evaluation, ReconstructionRougeIsWorkerIndependent) {
  const auto pairs = toy_pairs(6, 1);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<float> m(tiny_config(vocab.size()), 3);
  const auto a = counterfactual_reconstruction_rouge(m, vocab, pairs, 1);
  const auto b = counterfactual_reconstruction_rouge(m, vocab, pairs, 3);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_GE(a.rl.f1, 0.0);
  EXPECT_LE(a.rl.f1, 1.0);
}

TEST(Evaluation, SummaryOfOneReviewDecodesItsLatent) {
  const auto pairs = toy_pairs(2, 1);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<double> m(tiny_config(vocab.size()), 3);
  const Review r = pairs[0].negative;
  const auto z = m.encode(vocab.encode(r.text)).factors.decoder_input();
  EXPECT_EQ(summarize_mean(m, vocab, {r}), vocab.decode(m.decode_beam(z)));
  EXPECT_THROW(summarize_mean(m, vocab, {}), std::invalid_argument);
}
