#include "cfaug/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cfaug {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

std::string_view to_string(PairOrigin origin) {
  switch (origin) {
    case PairOrigin::kLlmRewrite: return "llm_rewrite";
    case PairOrigin::kDisAe: return "dis_ae";
    case PairOrigin::kManual: return "manual";
  }
  return "manual";
}

PairOrigin parse_origin(std::string_view name) {
  if (name == "llm_rewrite") return PairOrigin::kLlmRewrite;
  if (name == "dis_ae") return PairOrigin::kDisAe;
  if (name == "manual") return PairOrigin::kManual;
  throw CorpusError("unknown pair origin '" + std::string(name) + "'");
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : CorpusError("line " + std::to_string(line) + ": " + what), line_(line) {}

ReviewSet::ReviewSet(std::vector<Review> reviews) : reviews_(std::move(reviews)) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < reviews_.size(); ++i) {
    if (!ids.insert(reviews_[i].review_id).second)
      throw CorpusError("duplicate review_id '" + reviews_[i].review_id + "'");
    by_product_[reviews_[i].product_id].push_back(i);
  }
}

bool ReviewSet::has_product(const std::string& product_id) const {
  return by_product_.count(product_id) != 0;
}

const std::vector<std::size_t>& ReviewSet::product_reviews(const std::string& product_id) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = by_product_.find(product_id);
  return it == by_product_.end() ? kEmpty : it->second;
}

std::vector<std::string> ReviewSet::product_ids() const {
  std::vector<std::string> out;
  out.reserve(by_product_.size());
  for (const auto& [id, _] : by_product_) out.push_back(id);
  return out;
}

ReviewFormat parse_review_format(std::string_view name) {
  if (name == "jsonl" || name == "json") return ReviewFormat::kJsonLines;
  if (name == "tsv") return ReviewFormat::kTsv;
  throw CorpusError("unknown review format '" + std::string(name) + "'");
}

void validate_review(const Review& review) {
  if (review.rating < 1 || review.rating > 5)
    throw CorpusError("rating " + std::to_string(review.rating) + " outside 1-5");
  if (trim(review.text).empty()) throw CorpusError("empty review text");
}

void validate_pair(const CounterfactualPair& pair) {
  validate_review(pair.positive);
  validate_review(pair.negative);
  if (pair.positive.rating != 5) throw CorpusError("pair positive must be rated 5");
  if (pair.negative.rating != 1) throw CorpusError("pair negative must be rated 1");
  if (pair.positive.product_id != pair.negative.product_id)
    throw CorpusError("pair members must share product_id");
}

nlohmann::json review_to_json(const Review& review) {
  return {{"review_id", review.review_id},
          {"product_id", review.product_id},
          {"text", review.text},
          {"rating", review.rating}};
}

Review review_from_json(const nlohmann::json& record, std::size_t line) {
  if (!record.is_object()) throw ParseError(line, "record is not an object");
  if (!record.contains("text") || !record["text"].is_string())
    throw ParseError(line, "missing text");
  if (!record.contains("rating") || !record["rating"].is_number_integer())
    throw ParseError(line, "missing integer rating");
  Review r;
  r.text = record["text"].get<std::string>();
  r.rating = record["rating"].get<int>();
  r.review_id = record.contains("review_id") ? record["review_id"].get<std::string>()
                                             : "L" + std::to_string(line);
  r.product_id = record.contains("product_id") ? record["product_id"].get<std::string>() : "";
  try {
    validate_review(r);
  } catch (const CorpusError& e) {
    throw ParseError(line, e.what());
  }
  return r;
}

ReviewSet load_reviews(const std::filesystem::path& path, ReviewFormat format) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open review file " + path.string());
  std::vector<Review> reviews;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (format == ReviewFormat::kJsonLines) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
      }
      reviews.push_back(review_from_json(j, lineno));
    } else {
      auto fields = split_tabs(line);
      if (fields.size() != 4) throw ParseError(lineno, "expected 4 tab-separated fields");
      Review r{fields[0], fields[1], fields[3], 0};
      try {
        std::size_t used = 0;
        r.rating = std::stoi(fields[2], &used);
        if (used != fields[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(lineno, "missing integer rating");
      }
      try {
        validate_review(r);
      } catch (const CorpusError& e) {
        throw ParseError(lineno, e.what());
      }
      reviews.push_back(std::move(r));
    }
  }
  return ReviewSet(std::move(reviews));
}

void save_reviews(const std::filesystem::path& path, const std::vector<Review>& reviews) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& r : reviews) out << review_to_json(r).dump() << '\n';
}

std::vector<CounterfactualPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open pair file " + path.string());
  std::vector<CounterfactualPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.contains("positive") || !j.contains("negative"))
      throw ParseError(lineno, "pair needs positive and negative");
    CounterfactualPair p;
    p.positive = review_from_json(j["positive"], lineno);
    p.negative = review_from_json(j["negative"], lineno);
    try {
      p.origin = parse_origin(j.value("origin", "manual"));
      validate_pair(p);
    } catch (const CorpusError& e) {
      throw ParseError(lineno, e.what());
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_pairs(const std::filesystem::path& path, const std::vector<CounterfactualPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::json j = {{"positive", review_to_json(p.positive)},
                        {"negative", review_to_json(p.negative)},
                        {"origin", to_string(p.origin)}};
    out << j.dump() << '\n';
  }
}

DistributionStats compute_distribution(const ReviewSet& set) {
  DistributionStats stats;
  std::size_t positive = 0;
  for (const auto& r : set) {
    ++stats.histogram[r.rating - 1];
    if (r.rating > 3) ++positive;
  }
  stats.total = set.size();
  stats.positive_fraction =
      stats.total == 0 ? 0.0 : static_cast<double>(positive) / static_cast<double>(stats.total);
  return stats;
}

std::vector<Review> select_rewrite_sources(const ReviewSet& set) {
  std::vector<Review> out;
  std::copy_if(set.begin(), set.end(), std::back_inserter(out),
               [](const Review& r) { return r.rating == 5; });
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

std::string canonical_text(std::string_view text) {
  std::string out;
  for (const auto& t : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}, 1) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens, int min_freq)
    : min_freq_(min_freq) {
  id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& t : tokens) id_to_token_.push_back(t);
  for (int i = 0; i < size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], i).second)
      throw CorpusError("duplicate vocabulary token '" + id_to_token_[i] + "'");
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end() || it->second < kNumSpecial) return kUnk;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) return id_to_token_[kUnk];
  return id_to_token_[id];
}

bool Vocabulary::contains(std::string_view token) const { return id(token) != kUnk; }

std::vector<int> Vocabulary::encode(std::string_view text, std::size_t max_len) const {
  auto words = split_words(text);
  std::size_t keep = max_len >= 2 ? std::min(words.size(), max_len - 2) : 0;
  std::vector<int> ids;
  ids.reserve(keep + 2);
  ids.push_back(kBos);
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(id(words[i]));
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"min_freq", min_freq_},
          {"tokens", std::vector<std::string>(id_to_token_.begin() + kNumSpecial,
                                              id_to_token_.end())}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  return Vocabulary(j.at("tokens").get<std::vector<std::string>>(), j.at("min_freq").get<int>());
}

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq) {
  if (min_freq < 1) throw CorpusError("min_freq must be >= 1");
  std::unordered_map<std::string, int> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [w, c] : counts)
    if (c >= min_freq) kept.emplace_back(w, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [w, _] : kept) tokens.push_back(w);
  return Vocabulary(tokens, min_freq);
}

Vocabulary build_vocab(const ReviewSet& set, int min_freq) {
  std::vector<std::string> texts;
  texts.reserve(set.size());
  for (const auto& r : set) texts.push_back(r.text);
  return build_vocab(texts, min_freq);
}

int rating_to_class(int rating, int num_classes) {
  if (rating < 1 || rating > 5) throw CorpusError("rating outside 1-5");
  if (num_classes < 2) throw CorpusError("need at least 2 classes");
  double pos = (rating - 1) * (num_classes - 1) / 4.0;
  return static_cast<int>(std::floor(pos + 0.5));
}

}  // namespace cfaug
