#include "cfaug/reproduction.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

namespace cfaug {

std::string_view to_string(SentimentVerdict v) {
  switch (v) {
    case SentimentVerdict::kNegative: return "negative";
    case SentimentVerdict::kNonNegative: return "non_negative";
    case SentimentVerdict::kUnscored: return "unscored";
  }
  return "?";
}

UniformFluencyScorer::UniformFluencyScorer(std::size_t vocab_size) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  nll_ = std::log(static_cast<double>(vocab_size));
}

std::vector<double> UniformFluencyScorer::token_nll(std::string_view text) const {
  return std::vector<double>(split_words(text).size(), nll_);
}

namespace {

constexpr int kStart = 0, kEnd = 1, kUnknown = 2;

std::uint64_t key3(int a, int b, int c) {
  return (static_cast<std::uint64_t>(a) << 42) | (static_cast<std::uint64_t>(b) << 21) |
         static_cast<std::uint64_t>(c);
}

std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TrigramFluencyScorer::TrigramFluencyScorer(const std::vector<std::string>& texts) {
  for (const auto& t : texts)
    for (const auto& tok : split_words(t)) vocab_.emplace(tok, static_cast<int>(vocab_.size()) + 3);
  if (vocab_.size() >= (1u << 21) - 3) throw std::invalid_argument("vocabulary too large for trigram keys");
  for (const auto& t : texts) {
    int a = kStart, b = kStart;
    auto toks = split_words(t);
    for (std::size_t i = 0; i <= toks.size(); ++i) {
      const int c = i < toks.size() ? id(toks[i]) : kEnd;
      ++trigram_[key3(a, b, c)];
      ++context_[key3(a, b, 0)];
      a = b;
      b = c;
    }
  }
}

int TrigramFluencyScorer::id(const std::string& token) const {
  auto it = vocab_.find(token);
  return it == vocab_.end() ? kUnknown : it->second;
}

std::vector<double> TrigramFluencyScorer::token_nll(std::string_view text) const {
  const double v = static_cast<double>(vocab_size());
  std::vector<double> out;
  int a = kStart, b = kStart;
  auto toks = split_words(text);
  for (std::size_t i = 0; i <= toks.size(); ++i) {
    const int c = i < toks.size() ? id(toks[i]) : kEnd;
    auto tri = trigram_.find(key3(a, b, c));
    auto ctx = context_.find(key3(a, b, 0));
    const double num = 1.0 + (tri == trigram_.end() ? 0.0 : tri->second);
    const double den = v + (ctx == context_.end() ? 0.0 : ctx->second);
    out.push_back(-std::log(num / den));
    a = b;
    b = c;
  }
  return out;
}

void FilterConfig::validate() const {
  if (!(ppl_threshold > 0)) throw std::invalid_argument("ppl threshold must be > 0");
}

std::optional<double> compute_ppl(const FluencyScorer& scorer, std::string_view text,
                                  std::size_t min_chars, std::string* note) {
  if (text.size() < min_chars) {
    if (note) *note = "shorter than " + std::to_string(min_chars) + " characters";
    return std::nullopt;
  }
  try {
    const auto nll = scorer.token_nll(text);
    if (nll.empty()) {
      if (note) *note = "no tokens";
      return std::nullopt;
    }
    double sum = 0;
    for (double x : nll) sum += x;
    const double ppl = std::exp(sum / static_cast<double>(nll.size()));
    if (!std::isfinite(ppl)) {
      if (note) *note = "non-finite perplexity";
      return std::nullopt;
    }
    return ppl;
  } catch (const std::exception& e) {
    if (note) *note = std::string("scorer failed: ") + e.what();
    return std::nullopt;
  }
}

FilterAudit& FilterAudit::operator+=(const FilterAudit& o) {
  generated += o.generated;
  kept += o.kept;
  dropped_fluency += o.dropped_fluency;
  dropped_sentiment += o.dropped_sentiment;
  return *this;
}

nlohmann::json FilterAudit::to_json() const {
  return {{"generated", generated},
          {"kept", kept},
          {"dropped_fluency", dropped_fluency},
          {"dropped_sentiment", dropped_sentiment}};
}

void score_candidate(SynthesisCandidate& c, const FluencyScorer& scorer, const SentimentJudge& judge,
                     const FilterConfig& cfg) {
  if (!c.ppl) c.ppl = compute_ppl(scorer, c.text, cfg.min_chars, &c.note);
  if (c.verdict == SentimentVerdict::kUnscored && !c.text.empty())
    c.verdict = judge.is_negative(c.text) ? SentimentVerdict::kNegative : SentimentVerdict::kNonNegative;
}

FilterResult filter(const std::vector<SynthesisCandidate>& candidates, const SentimentJudge& judge,
                    const FilterConfig& cfg) {
  cfg.validate();
  FilterResult out;
  out.judged = candidates;
  for (auto& c : out.judged) {
    ++out.audit.generated;
    if (c.verdict == SentimentVerdict::kUnscored && !c.text.empty())
      c.verdict = judge.is_negative(c.text) ? SentimentVerdict::kNegative : SentimentVerdict::kNonNegative;
    if (!c.ppl || *c.ppl > cfg.ppl_threshold) {
      c.kept = false;
      ++out.audit.dropped_fluency;
    } else if (c.verdict != SentimentVerdict::kNegative) {
      c.kept = false;
      ++out.audit.dropped_sentiment;
    } else {
      c.kept = true;
      ++out.audit.kept;
      out.retained.push_back(c);
    }
  }
  return out;
}

PplSummary summarize_ppl(const std::vector<SynthesisCandidate>& candidates) {
  PplSummary s;
  double sum = 0;
  for (const auto& c : candidates) {
    if (c.ppl) {
      ++s.scored;
      sum += *c.ppl;
    } else {
      ++s.unscored;
    }
  }
  s.mean = s.scored ? sum / static_cast<double>(s.scored) : 0.0;
  return s;
}

std::vector<ParentPair> select_parents(const ReviewSet& set, const std::string& product_id,
                                       std::size_t limit, std::uint64_t seed,
                                       int min_content_rating, std::vector<std::string>* warnings) {
  if (!set.has_product(product_id)) throw std::invalid_argument("unknown product '" + product_id + "'");
  std::vector<const Review*> positives, negatives;
  for (std::size_t i : set.product_reviews(product_id))
    if (set[i].rating >= min_content_rating) positives.push_back(&set[i]);
  for (const auto& r : set)
    if (r.rating <= 2) negatives.push_back(&r);
  if (positives.empty() || negatives.empty()) {
    if (warnings)
      warnings->push_back("product " + product_id + ": no " +
                          (positives.empty() ? "positive reviews" : "negative reviews in corpus"));
    return {};
  }
  std::mt19937_64 rng(seed ^ fnv(product_id));
  std::shuffle(negatives.begin(), negatives.end(), rng);
  std::vector<ParentPair> out;
  for (const Review* n : negatives)
    for (const Review* p : positives) {
      if (limit && out.size() >= limit) return out;
      out.push_back({*p, *n});
    }
  return out;
}

template <typename Scalar>
SynthesisCandidate synthesize(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                              const ParentPair& parents, int beam_width, int max_length) {
  const auto cap = static_cast<std::size_t>(model.config().max_encode_length);
  const auto content = model.encode(vocab.encode(parents.content_parent.text, cap));
  const auto sentiment = model.encode(vocab.encode(parents.sentiment_parent.text, cap));
  nn::Vec<Scalar> z(model.config().latent_dim());
  z << sentiment.factors.z_tilde, content.factors.z_c;
  SynthesisCandidate c;
  c.text = vocab.decode(model.decode_beam(z, beam_width, max_length));
  c.content_id = parents.content_parent.review_id;
  c.sentiment_id = parents.sentiment_parent.review_id;
  c.product_id = parents.content_parent.product_id;
  return c;
}

FilterAudit ReproduceResult::total() const {
  FilterAudit t;
  for (const auto& [_, a] : audits) t += a;
  return t;
}

nlohmann::json ReproduceResult::audit_json() const {
  nlohmann::json products = nlohmann::json::object();
  for (const auto& [pid, a] : audits) products[pid] = a.to_json();
  const auto ppl = summarize_ppl(candidates);
  return {{"products", products},
          {"total", total().to_json()},
          {"ppl", {{"scored", ppl.scored}, {"unscored", ppl.unscored}, {"mean", ppl.mean}}},
          {"warnings", warnings}};
}

template <typename Scalar>
ReproduceResult reproduce(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                          const ReviewSet& set, const std::vector<std::string>& products,
                          const FluencyScorer& scorer, const SentimentJudge& judge,
                          const ReproduceOptions& options) {
  options.filter.validate();
  ReproduceResult result;
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, options.workers));
  for (const auto& pid : products) {
    FilterAudit& audit = result.audits[pid];
    if (options.per_product_quota == 0) continue;
    const auto parents =
        select_parents(set, pid, options.max_parents, options.seed, 5, &result.warnings);
    std::size_t kept = 0;
    for (std::size_t start = 0; start < parents.size() && kept < options.per_product_quota;
         start += chunk) {
      const std::size_t end = std::min(parents.size(), start + chunk);
      std::vector<SynthesisCandidate> batch(end - start);
      std::exception_ptr failure;
      std::mutex mu;
      auto work = [&](std::size_t k) {
        try {
          batch[k] = synthesize(model, vocab, parents[start + k]);
          score_candidate(batch[k], scorer, judge, options.filter);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      };
      if (batch.size() == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < batch.size(); ++k) pool.emplace_back(work, k);
        for (auto& t : pool) t.join();
      }
      if (failure) std::rethrow_exception(failure);
      for (std::size_t k = 0; k < batch.size() && kept < options.per_product_quota; ++k) {
        auto judged = filter({batch[k]}, judge, options.filter);
        audit += judged.audit;
        result.candidates.push_back(judged.judged.front());
        if (judged.retained.empty()) continue;
        const auto& c = judged.retained.front();
        const ParentPair& pp = parents[start + k];
        CounterfactualPair pair;
        pair.positive = pp.content_parent;
        pair.negative = {pp.content_parent.review_id + "~" + pp.sentiment_parent.review_id, pid,
                         c.text, 1};
        pair.origin = PairOrigin::kDisAe;
        result.pairs.push_back(std::move(pair));
        ++kept;
      }
    }
    if (kept < options.per_product_quota)
      result.warnings.push_back("product " + pid + ": quota unmet (" + std::to_string(kept) + "/" +
                                std::to_string(options.per_product_quota) + ")");
  }
  return result;
}

void save_audit(const std::filesystem::path& path, const ReproduceResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write audit file " + path.string());
  out << result.audit_json().dump(2) << '\n';
}

#define CFAUG_INSTANTIATE(S)                                                                     \
  template SynthesisCandidate synthesize<S>(const DisAEModel<S>&, const Vocabulary&,             \
                                            const ParentPair&, int, int);                        \
  template ReproduceResult reproduce<S>(const DisAEModel<S>&, const Vocabulary&, const ReviewSet&, \
                                        const std::vector<std::string>&, const FluencyScorer&,   \
                                        const SentimentJudge&, const ReproduceOptions&);

CFAUG_INSTANTIATE(float)
CFAUG_INSTANTIATE(double)

#undef CFAUG_INSTANTIATE

}  // namespace cfaug
