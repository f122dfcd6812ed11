#pragma once

// Mass production of negative reviews: the content latent of a positive
// review is decoded together with the soft sentiment latent of a negative one,
// then the output is filtered by fluency and sentiment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cfaug/corpus.hpp"
#include "cfaug/disae.hpp"
#include "cfaug/sentiment.hpp"

namespace cfaug {

struct ParentPair {
  Review content_parent;    // positive, target product
  Review sentiment_parent;  // negative, any product
};

enum class SentimentVerdict { kNegative, kNonNegative, kUnscored };

std::string_view to_string(SentimentVerdict v);

struct SynthesisCandidate {
  std::string text;
  std::string content_id;
  std::string sentiment_id;
  std::string product_id;
  std::optional<double> ppl;  // empty means unscored
  SentimentVerdict verdict = SentimentVerdict::kUnscored;
  bool kept = false;
  std::string note;
};

/// Per-token negative log-likelihoods (natural log) of a text.
class FluencyScorer {
 public:
  virtual ~FluencyScorer() = default;
  virtual std::vector<double> token_nll(std::string_view text) const = 0;
};

/// Every token has probability 1/V.
class UniformFluencyScorer : public FluencyScorer {
 public:
  explicit UniformFluencyScorer(std::size_t vocab_size);
  std::vector<double> token_nll(std::string_view text) const override;

 private:
  double nll_;
};

/// Order-3 word model with add-one smoothing; end-of-text is scored as a token.
class TrigramFluencyScorer : public FluencyScorer {
 public:
  explicit TrigramFluencyScorer(const std::vector<std::string>& texts);
  std::vector<double> token_nll(std::string_view text) const override;
  std::size_t vocab_size() const { return vocab_.size() + 2; }  // + end, unknown

 private:
  int id(const std::string& token) const;

  std::unordered_map<std::string, int> vocab_;
  std::unordered_map<std::uint64_t, std::uint32_t> trigram_;
  std::unordered_map<std::uint64_t, std::uint32_t> context_;
};

struct FilterConfig {
  double ppl_threshold = 125.0;
  std::size_t min_chars = 10;  // shorter texts are not scored

  void validate() const;
};

/// exp(mean token NLL). Texts shorter than min_chars, and scorer failures,
/// yield nullopt; the failure reason goes to `note` when given.
std::optional<double> compute_ppl(const FluencyScorer& scorer, std::string_view text,
                                  std::size_t min_chars = 10, std::string* note = nullptr);

struct FilterAudit {
  std::size_t generated = 0;
  std::size_t kept = 0;
  std::size_t dropped_fluency = 0;
  std::size_t dropped_sentiment = 0;

  FilterAudit& operator+=(const FilterAudit& o);
  nlohmann::json to_json() const;
  bool operator==(const FilterAudit&) const = default;
};

struct FilterResult {
  std::vector<SynthesisCandidate> retained;
  std::vector<SynthesisCandidate> judged;  // all input candidates with decisions filled in
  FilterAudit audit;
};

/// Fills ppl (when unscored) and the sentiment verdict.
void score_candidate(SynthesisCandidate& c, const FluencyScorer& scorer, const SentimentJudge& judge,
                     const FilterConfig& cfg);

/// Kept iff ppl <= threshold and verdict negative. Fluency is checked first;
/// an unscored ppl counts as a fluency drop. Missing verdicts are judged here.
FilterResult filter(const std::vector<SynthesisCandidate>& candidates, const SentimentJudge& judge,
                    const FilterConfig& cfg);

struct PplSummary {
  std::size_t scored = 0;
  std::size_t unscored = 0;
  double mean = 0.0;  // over scored candidates only
};

PplSummary summarize_ppl(const std::vector<SynthesisCandidate>& candidates);

/// Positive reviews (rating >= min_content_rating) of `product_id` crossed
/// with corpus-wide negatives (rating <= 2) in seeded shuffled order,
/// negative-major, truncated to `limit` (0 means no limit).
std::vector<ParentPair> select_parents(const ReviewSet& set, const std::string& product_id,
                                       std::size_t limit, std::uint64_t seed,
                                       int min_content_rating = 4,
                                       std::vector<std::string>* warnings = nullptr);

template <typename Scalar>
SynthesisCandidate synthesize(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                              const ParentPair& parents, int beam_width, int max_length);

template <typename Scalar>
SynthesisCandidate synthesize(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                              const ParentPair& parents) {
  return synthesize(model, vocab, parents, model.config().beam_width,
                    model.config().max_decode_length);
}

struct ReproduceOptions {
  std::size_t per_product_quota = 10;
  std::size_t max_parents = 0;  // per product, 0 means all
  std::uint64_t seed = 0;
  int workers = 1;
  FilterConfig filter;
};

struct ReproduceResult {
  std::vector<CounterfactualPair> pairs;
  std::map<std::string, FilterAudit> audits;  // by product
  std::vector<SynthesisCandidate> candidates;  // every judged candidate, in order
  std::vector<std::string> warnings;

  FilterAudit total() const;
  nlohmann::json audit_json() const;
};

/// Uses rating-5 content parents so every output is a valid pair.
template <typename Scalar>
ReproduceResult reproduce(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                          const ReviewSet& set, const std::vector<std::string>& products,
                          const FluencyScorer& scorer, const SentimentJudge& judge,
                          const ReproduceOptions& options);

void save_audit(const std::filesystem::path& path, const ReproduceResult& result);

}  // namespace cfaug
