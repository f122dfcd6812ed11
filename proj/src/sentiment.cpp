#include "cfaug/sentiment.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace cfaug {

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::kNegative: return "negative";
    case Polarity::kNeutral: return "neutral";
    case Polarity::kPositive: return "positive";
  }
  return "?";
}

const std::vector<std::pair<std::string, std::string>>& polarity_word_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"great", "terrible"},      {"good", "bad"},           {"excellent", "awful"},
      {"love", "hate"},           {"loved", "hated"},        {"amazing", "horrible"},
      {"delicious", "disgusting"}, {"friendly", "rude"},     {"fresh", "stale"},
      {"clean", "dirty"},         {"comfortable", "uncomfortable"},
      {"fast", "slow"},           {"perfect", "broken"},     {"best", "worst"},
      {"wonderful", "dreadful"},  {"happy", "unhappy"},      {"reliable", "unreliable"},
      {"sturdy", "flimsy"},       {"helpful", "useless"},    {"pleasant", "unpleasant"},
      {"recommend", "avoid"},     {"beautiful", "ugly"},     {"tasty", "bland"},
      {"cheap", "overpriced"},    {"nice", "nasty"},         {"fantastic", "mediocre"},
      {"always", "never"},        {"frequently", "rarely"},  {"sanitary", "unsanitary"},
      {"working", "failing"},     {"quiet", "noisy"},        {"soft", "scratchy"},
      {"bright", "dim"},          {"generous", "stingy"},    {"durable", "fragile"},
      {"impressed", "disappointed"}, {"enjoyed", "regretted"}, {"satisfied", "dissatisfied"},
  };
  return pairs;
}

namespace {

const std::unordered_set<std::string>& positive_set() {
  static const auto set = [] {
    std::unordered_set<std::string> s;
    for (const auto& [p, n] : polarity_word_pairs())
      if (p != "always" && p != "frequently" && p != "working") s.insert(p);
    return s;
  }();
  return set;
}

const std::unordered_set<std::string>& negative_set() {
  static const auto set = [] {
    std::unordered_set<std::string> s;
    for (const auto& [p, n] : polarity_word_pairs())
      if (n != "never" && n != "rarely") s.insert(n);
    return s;
  }();
  return set;
}

bool is_word(const std::string& tok) {
  return !tok.empty() && std::isalnum(static_cast<unsigned char>(tok[0]));
}

}  // namespace

bool is_positive_word(std::string_view word) { return positive_set().count(std::string(word)) > 0; }
bool is_negative_word(std::string_view word) { return negative_set().count(std::string(word)) > 0; }

LogisticTextClassifier::Sparse LogisticTextClassifier::features(std::string_view text) const {
  Sparse out;
  double pos = 0, neg = 0;
  std::unordered_set<int> seen;
  for (const auto& tok : split_words(text)) {
    if (!is_word(tok)) continue;
    if (lexicon_) {
      pos += is_positive_word(tok) ? 1.0 : 0.0;
      neg += is_negative_word(tok) ? 1.0 : 0.0;
    }
    auto it = index_.find(tok);
    if (it != index_.end() && seen.insert(it->second).second) out.emplace_back(it->second, 1.0);
  }
  const int base = static_cast<int>(index_.size());
  if (lexicon_) {
    out.emplace_back(base, pos);
    out.emplace_back(base + 1, neg);
  }
  return out;
}

void LogisticTextClassifier::fit(const std::vector<std::string>& texts,
                                 const std::vector<int>& labels, int num_classes,
                                 const LogisticOptions& options) {
  if (texts.size() != labels.size()) throw std::invalid_argument("texts/labels size mismatch");
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  lexicon_ = options.lexicon_features;
  index_.clear();
  for (const auto& t : texts)
    for (const auto& tok : split_words(t))
      if (is_word(tok)) index_.emplace(tok, static_cast<int>(index_.size()));
  const int nfeat = static_cast<int>(index_.size()) + (lexicon_ ? 2 : 0);
  weights_ = Eigen::MatrixXd::Zero(num_classes, nfeat + 1);

  std::vector<Sparse> xs;
  xs.reserve(texts.size());
  for (const auto& t : texts) xs.push_back(features(t));
  std::vector<std::size_t> order(texts.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  Eigen::VectorXd logits(num_classes);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = options.learning_rate / (1.0 + epoch);
    for (std::size_t i : order) {
      const auto& x = xs[i];
      logits = weights_.col(nfeat);
      for (const auto& [f, v] : x) logits += weights_.col(f) * v;
      Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
      p /= p.sum();
      p(labels[i]) -= 1.0;
      const double decay = 1.0 - lr * options.l2;
      for (const auto& [f, v] : x) weights_.col(f) = weights_.col(f) * decay - lr * v * p;
      weights_.col(nfeat) -= lr * p;
    }
  }
}

Eigen::VectorXd LogisticTextClassifier::probabilities(std::string_view text) const {
  if (!trained()) throw std::logic_error("classifier is not trained");
  const auto nfeat = weights_.cols() - 1;
  Eigen::VectorXd logits = weights_.col(nfeat);
  for (const auto& [f, v] : features(text)) logits += weights_.col(f) * v;
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

int LogisticTextClassifier::predict(std::string_view text) const {
  Eigen::Index best = 0;
  probabilities(text).maxCoeff(&best);
  return static_cast<int>(best);
}

BowSentimentJudge::BowSentimentJudge(const std::vector<Review>& reviews,
                                     const LogisticOptions& options) {
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (const auto& r : reviews) {
    if (r.rating == 3) continue;
    texts.push_back(r.text);
    labels.push_back(r.rating <= 2 ? 1 : 0);
  }
  if (texts.empty()) throw std::invalid_argument("no polar reviews to train the judge on");
  model_.fit(texts, labels, 2, options);
}

double BowSentimentJudge::negative_probability(std::string_view text) const {
  return model_.probabilities(text)(1);
}

bool BowSentimentJudge::is_negative(std::string_view text) const {
  return negative_probability(text) > 0.5;
}

HybridSentimentJudge3::HybridSentimentJudge3(const std::vector<Review>& reviews,
                                             LogisticOptions options) {
  options.lexicon_features = true;
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (const auto& r : reviews) {
    texts.push_back(r.text);
    labels.push_back(r.rating <= 2 ? 0 : r.rating == 3 ? 1 : 2);
  }
  if (texts.empty()) throw std::invalid_argument("no reviews to train the judge on");
  model_.fit(texts, labels, 3, options);
}

Polarity HybridSentimentJudge3::judge(std::string_view text) const {
  switch (model_.predict(text)) {
    case 0: return Polarity::kNegative;
    case 1: return Polarity::kNeutral;
    default: return Polarity::kPositive;
  }
}

}  // namespace cfaug
