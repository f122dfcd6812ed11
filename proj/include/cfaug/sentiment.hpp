#pragma once

// Text-level sentiment judges. Reference implementations are bag-of-words
// logistic models trained on corpus ratings; anything else can plug in
// behind SentimentJudge / SentimentJudge3.

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cfaug/corpus.hpp"

namespace cfaug {

enum class Polarity { kNegative, kNeutral, kPositive };

std::string_view to_string(Polarity p);

/// Binary review-level judge: negative vs non-negative.
class SentimentJudge {
 public:
  virtual ~SentimentJudge() = default;
  virtual bool is_negative(std::string_view text) const = 0;
};

/// Three-way judge used for sentiment precision.
class SentimentJudge3 {
 public:
  virtual ~SentimentJudge3() = default;
  virtual Polarity judge(std::string_view text) const = 0;
};

/// Aligned (positive, negative) word pairs. Also the source of the lexicons.
const std::vector<std::pair<std::string, std::string>>& polarity_word_pairs();
bool is_positive_word(std::string_view word);
bool is_negative_word(std::string_view word);

struct LogisticOptions {
  int epochs = 30;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  bool lexicon_features = false;  // append positive/negative lexicon counts
};

/// Multinomial logistic regression over token-presence features.
class LogisticTextClassifier {
 public:
  LogisticTextClassifier() = default;

  void fit(const std::vector<std::string>& texts, const std::vector<int>& labels, int num_classes,
           const LogisticOptions& options = {});

  int num_classes() const { return static_cast<int>(weights_.rows()); }
  bool trained() const { return weights_.size() > 0; }
  Eigen::VectorXd probabilities(std::string_view text) const;
  int predict(std::string_view text) const;

 private:
  using Sparse = std::vector<std::pair<int, double>>;
  Sparse features(std::string_view text) const;

  std::unordered_map<std::string, int> index_;
  Eigen::MatrixXd weights_;  // classes x (features + 1), last column is the bias
  bool lexicon_ = false;
};

/// Trained on ratings <= 2 (negative) vs >= 4; rating 3 is skipped.
class BowSentimentJudge : public SentimentJudge {
 public:
  BowSentimentJudge(const std::vector<Review>& reviews, const LogisticOptions& options = {});
  bool is_negative(std::string_view text) const override;
  double negative_probability(std::string_view text) const;

 private:
  LogisticTextClassifier model_;
};

/// Ratings <= 2 negative, 3 neutral, >= 4 positive; lexicon counts as extra features.
class HybridSentimentJudge3 : public SentimentJudge3 {
 public:
  HybridSentimentJudge3(const std::vector<Review>& reviews, LogisticOptions options = {});
  Polarity judge(std::string_view text) const override;

 private:
  LogisticTextClassifier model_;
};

}  // namespace cfaug
