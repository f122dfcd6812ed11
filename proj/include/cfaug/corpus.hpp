#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace cfaug {

/// One user review. Ratings follow the 1-5 star scale.
struct Review {
  std::string review_id;
  std::string product_id;
  std::string text;
  int rating = 0;

  bool operator==(const Review&) const = default;
};

enum class PairOrigin { kLlmRewrite, kDisAe, kManual };

std::string_view to_string(PairOrigin origin);
PairOrigin parse_origin(std::string_view name);

/// Same content, opposite polarity: positive is rated 5, negative 1.
struct CounterfactualPair {
  Review positive;
  Review negative;
  PairOrigin origin = PairOrigin::kLlmRewrite;

  bool operator==(const CounterfactualPair&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for a malformed record; carries the 1-based line number.
class ParseError : public CorpusError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Ordered, read-only review collection indexed by product.
class ReviewSet {
 public:
  ReviewSet() = default;
  explicit ReviewSet(std::vector<Review> reviews);

  const std::vector<Review>& reviews() const { return reviews_; }
  std::size_t size() const { return reviews_.size(); }
  bool empty() const { return reviews_.empty(); }
  const Review& operator[](std::size_t i) const { return reviews_[i]; }

  bool has_product(const std::string& product_id) const;
  /// Indices into reviews(), in corpus order.
  const std::vector<std::size_t>& product_reviews(const std::string& product_id) const;
  std::vector<std::string> product_ids() const;

  auto begin() const { return reviews_.begin(); }
  auto end() const { return reviews_.end(); }

 private:
  std::vector<Review> reviews_;
  std::map<std::string, std::vector<std::size_t>> by_product_;
};

enum class ReviewFormat { kJsonLines, kTsv };

ReviewFormat parse_review_format(std::string_view name);

ReviewSet load_reviews(const std::filesystem::path& path,
                       ReviewFormat format = ReviewFormat::kJsonLines);
void save_reviews(const std::filesystem::path& path, const std::vector<Review>& reviews);

nlohmann::json review_to_json(const Review& review);
Review review_from_json(const nlohmann::json& record, std::size_t line = 0);
void validate_review(const Review& review);
void validate_pair(const CounterfactualPair& pair);

std::vector<CounterfactualPair> load_pairs(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const std::vector<CounterfactualPair>& pairs);

struct DistributionStats {
  std::size_t total = 0;
  double positive_fraction = 0.0;
  std::array<std::size_t, 5> histogram{};  // index r-1 counts rating r
};

DistributionStats compute_distribution(const ReviewSet& set);

/// Reviews rated exactly 5, in corpus order.
std::vector<Review> select_rewrite_sources(const ReviewSet& set);

// --- tokenization --------------------------------------------------------

/// Lowercased word-level split; every punctuation character is its own token.
std::vector<std::string> split_words(std::string_view text);
/// Tokens of split_words joined by single spaces.
std::string canonical_text(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecial = 4;

  Vocabulary();
  /// Tokens in id order after the specials.
  explicit Vocabulary(const std::vector<std::string>& tokens, int min_freq = 1);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int min_freq() const { return min_freq_; }
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;

  /// Ids with BOS/EOS attached; truncated so the whole sequence fits max_len.
  std::vector<int> encode(std::string_view text, std::size_t max_len = 128) const;
  /// Drops specials and joins tokens by single spaces.
  std::string decode(const std::vector<int>& ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_ && min_freq_ == other.min_freq_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  int min_freq_ = 1;
};

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq = 2);
Vocabulary build_vocab(const ReviewSet& set, int min_freq = 2);

inline std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab,
                                 std::size_t max_len = 128) {
  return vocab.encode(text, max_len);
}
inline std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  return vocab.decode(ids);
}

/// Rating to class index: M=5 maps r to r-1, M=2 maps {1,2}->0 and {4,5}->1.
int rating_to_class(int rating, int num_classes);

}  // namespace cfaug
