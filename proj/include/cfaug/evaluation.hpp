#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfaug/corpus.hpp"
#include "cfaug/disae.hpp"
#include "cfaug/sentiment.hpp"

namespace cfaug {

struct RougeTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeScore {
  RougeTriple r1, r2, rl;
  bool empty_reference = false;

  nlohmann::json to_json() const;
};

/// Lowercased, punctuation-split, punctuation tokens dropped.
std::vector<std::string> rouge_tokens(std::string_view text);

RougeScore rouge(std::string_view candidate, std::string_view reference);

/// Field-wise mean (flags are or-ed).
RougeScore mean_rouge(const std::vector<RougeScore>& scores);

/// Splits after '.', '!' or '?' when followed by whitespace.
std::vector<std::string> split_sentences(std::string_view text);

struct SentimentReport {
  double review_level = 0.0;    // Rev
  double sentence_level = 0.0;  // Sen
  Polarity target = Polarity::kNegative;
  std::size_t empty_summaries = 0;

  nlohmann::json to_json() const;  // percentages
};

/// 1 for a match, 0.5 for neutral, 0 otherwise.
double polarity_score(Polarity verdict, Polarity target);

SentimentReport sentiment_precision(const std::vector<std::string>& summaries,
                                    const SentimentJudge3& judge, Polarity target);

/// Mean of the review- and sentence-level changes.
double dif(double base_rev, double base_sen, double new_rev, double new_sen);
double dif(const SentimentReport& base, const SentimentReport& updated);  // percent scale

/// Decodes x^p from [z~^p_e ; z^n_c] and x^n from [z~^n_e ; z^p_c] and
/// scores each against its own text; the mean over both directions and pairs.
template <typename Scalar>
RougeScore counterfactual_reconstruction_rouge(const DisAEModel<Scalar>& model,
                                               const Vocabulary& vocab,
                                               const std::vector<CounterfactualPair>& pairs,
                                               int workers = 1);

/// Beam-decodes the mean of the reviews' [z~_e ; z_c] vectors.
template <typename Scalar>
std::string summarize_mean(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                           const std::vector<Review>& reviews);

struct EvaluationReport {
  std::optional<RougeScore> rouge;
  std::optional<SentimentReport> pos;
  std::optional<SentimentReport> neg;
  std::optional<double> dif;

  nlohmann::json to_json() const;
};

}  // namespace cfaug
