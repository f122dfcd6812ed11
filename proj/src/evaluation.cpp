#include "cfaug/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace cfaug {

namespace {

RougeTriple overlap_score(double hits, double cand, double ref) {
  RougeTriple t;
  if (cand > 0) t.precision = hits / cand;
  if (ref > 0) t.recall = hits / ref;
  if (t.precision + t.recall > 0) t.f1 = 2 * t.precision * t.recall / (t.precision + t.recall);
  return t;
}

RougeTriple ngram_score(const std::vector<std::string>& c, const std::vector<std::string>& r, std::size_t n) {
  auto grams = [n](const std::vector<std::string>& t) {
    std::map<std::vector<std::string>, int> m;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++m[{t.begin() + i, t.begin() + i + n}];
    return m;
  };
  const auto gc = grams(c), gr = grams(r);
  double hits = 0, nc = 0, nr = 0;
  for (const auto& [g, k] : gc) {
    nc += k;
    auto it = gr.find(g);
    if (it != gr.end()) hits += std::min(k, it->second);
  }
  for (const auto& [g, k] : gr) nr += k;
  return overlap_score(hits, nc, nr);
}

RougeTriple lcs_score(const std::vector<std::string>& c, const std::vector<std::string>& r) {
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j)
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return overlap_score(static_cast<double>(prev[r.size()]), static_cast<double>(c.size()),
                       static_cast<double>(r.size()));
}

nlohmann::json triple_json(const RougeTriple& t) {
  return {{"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1}};
}

}  // namespace

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : split_words(text))
    if (!t.empty() && std::isalnum(static_cast<unsigned char>(t[0]))) out.push_back(std::move(t));
  return out;
}

RougeScore rouge(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_tokens(candidate), r = rouge_tokens(reference);
  RougeScore s;
  if (r.empty()) {
    s.empty_reference = true;
    return s;
  }
  s.r1 = ngram_score(c, r, 1);
  s.r2 = ngram_score(c, r, 2);
  s.rl = lcs_score(c, r);
  return s;
}

RougeScore mean_rouge(const std::vector<RougeScore>& scores) {
  RougeScore m;
  if (scores.empty()) return m;
  auto add = [](RougeTriple& a, const RougeTriple& b) {
    a.precision += b.precision;
    a.recall += b.recall;
    a.f1 += b.f1;
  };
  auto scale = [](RougeTriple& a, double k) {
    a.precision *= k;
    a.recall *= k;
    a.f1 *= k;
  };
  for (const auto& s : scores) {
    add(m.r1, s.r1);
    add(m.r2, s.r2);
    add(m.rl, s.rl);
    m.empty_reference = m.empty_reference || s.empty_reference;
  }
  const double k = 1.0 / static_cast<double>(scores.size());
  scale(m.r1, k);
  scale(m.r2, k);
  scale(m.rl, k);
  return m;
}

nlohmann::json RougeScore::to_json() const {
  return {{"R1", triple_json(r1)}, {"R2", triple_json(r2)}, {"RL", triple_json(rl)},
          {"empty_reference", empty_reference}};
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      std::size_t e = cur.find_last_not_of(" \t\r\n");
      out.push_back(cur.substr(b, e - b + 1));
    }
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    const char ch = text[i];
    if ((ch == '.' || ch == '!' || ch == '?') && i + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[i + 1])))
      flush();
  }
  flush();
  return out;
}

double polarity_score(Polarity verdict, Polarity target) {
  if (verdict == Polarity::kNeutral) return 0.5;
  return verdict == target ? 1.0 : 0.0;
}

SentimentReport sentiment_precision(const std::vector<std::string>& summaries,
                                    const SentimentJudge3& judge, Polarity target) {
  if (target == Polarity::kNeutral) throw std::invalid_argument("target polarity must be positive or negative");
  SentimentReport rep;
  rep.target = target;
  if (summaries.empty()) return rep;
  double rev = 0, sen = 0;
  for (const auto& s : summaries) {
    const auto sentences = split_sentences(s);
    if (sentences.empty()) {
      ++rep.empty_summaries;
      continue;
    }
    rev += polarity_score(judge.judge(s), target);
    double acc = 0;
    for (const auto& x : sentences) acc += polarity_score(judge.judge(x), target);
    sen += acc / static_cast<double>(sentences.size());
  }
  const double n = static_cast<double>(summaries.size());
  rep.review_level = rev / n;
  rep.sentence_level = sen / n;
  return rep;
}

nlohmann::json SentimentReport::to_json() const {
  return {{"Rev", 100.0 * review_level}, {"Sen", 100.0 * sentence_level},
          {"empty_summaries", empty_summaries}};
}

double dif(double base_rev, double base_sen, double new_rev, double new_sen) {
  return ((new_rev - base_rev) + (new_sen - base_sen)) / 2.0;
}

double dif(const SentimentReport& base, const SentimentReport& updated) {
  return 100.0 * dif(base.review_level, base.sentence_level, updated.review_level,
                     updated.sentence_level);
}

template <typename Scalar>
RougeScore counterfactual_reconstruction_rouge(const DisAEModel<Scalar>& model,
                                               const Vocabulary& vocab,
                                               const std::vector<CounterfactualPair>& pairs,
                                               int workers) {
  std::vector<RougeScore> scores(2 * pairs.size());
  const auto cap = static_cast<std::size_t>(model.config().max_encode_length);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      try {
        const auto p = model.encode(vocab.encode(pairs[i].positive.text, cap)).factors;
        const auto n = model.encode(vocab.encode(pairs[i].negative.text, cap)).factors;
        nn::Vec<Scalar> zp(model.config().latent_dim()), zn(model.config().latent_dim());
        zp << p.z_tilde, n.z_c;
        zn << n.z_tilde, p.z_c;
        scores[2 * i] = rouge(vocab.decode(model.decode_beam(zp)), pairs[i].positive.text);
        scores[2 * i + 1] = rouge(vocab.decode(model.decode_beam(zn)), pairs[i].negative.text);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = pairs.size();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(pairs.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return mean_rouge(scores);
}

template <typename Scalar>
std::string summarize_mean(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                           const std::vector<Review>& reviews) {
  if (reviews.empty()) throw std::invalid_argument("summarize_mean needs at least one review");
  const auto cap = static_cast<std::size_t>(model.config().max_encode_length);
  nn::Vec<Scalar> sum = nn::Vec<Scalar>::Zero(model.config().latent_dim());
  for (const auto& r : reviews) sum += model.encode(vocab.encode(r.text, cap)).factors.decoder_input();
  const nn::Vec<Scalar> mean = sum / static_cast<Scalar>(reviews.size());
  return vocab.decode(model.decode_beam(mean));
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (rouge)
    j["rouge"] = {{"R1", 100.0 * rouge->r1.f1}, {"R2", 100.0 * rouge->r2.f1},
                  {"RL", 100.0 * rouge->rl.f1}};
  if (pos) j["Pos"] = pos->to_json();
  if (neg) j["Neg"] = neg->to_json();
  if (dif) j["Dif"] = *dif;
  return j;
}

#define CFAUG_INSTANTIATE(S)                                                                   \
  template RougeScore counterfactual_reconstruction_rouge<S>(                                  \
      const DisAEModel<S>&, const Vocabulary&, const std::vector<CounterfactualPair>&, int);   \
  template std::string summarize_mean<S>(const DisAEModel<S>&, const Vocabulary&,              \
                                         const std::vector<Review>&);

CFAUG_INSTANTIATE(float)
CFAUG_INSTANTIATE(double)

#undef CFAUG_INSTANTIATE

}  // namespace cfaug
