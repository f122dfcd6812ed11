#include "cfaug/llm_rewrite.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace cfaug {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string generate(ChatService& client, const PromptState& state, std::string_view text,
                     const RewriteOptions& options) {
  if (options.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  ChatRequest request{options.model, state.temperature, render_prompt(state, text)};
  for (int attempt = 1;; ++attempt) {
    try {
      std::string out = trim(client.complete(request));
      if (out.empty()) throw RejectionError("service returned an empty completion");
      return out;
    } catch (const ServiceError& e) {
      if (attempt >= options.max_attempts) throw ServiceError(e.what(), attempt);
    }
  }
}

}  // namespace

void PromptState::validate() const {
  if (!(temperature >= 0.0 && temperature <= 1.0))
    throw std::invalid_argument("temperature must lie in [0,1]");
  for (const auto& e : examples)
    if (trim(e.source).empty() || trim(e.counterfactual).empty())
      throw std::invalid_argument("prompt example with empty text");
}

nlohmann::json PromptState::to_json() const {
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : examples) ex.push_back({{"source", e.source}, {"counterfactual", e.counterfactual}});
  return {{"instruction", instruction}, {"temperature", temperature}, {"examples", ex}};
}

PromptState PromptState::from_json(const nlohmann::json& j) {
  PromptState s;
  s.instruction = j.value("instruction", s.instruction);
  s.temperature = j.value("temperature", s.temperature);
  if (j.contains("examples"))
    for (const auto& e : j.at("examples"))
      s.examples.push_back({e.at("source").get<std::string>(), e.at("counterfactual").get<std::string>()});
  s.validate();
  return s;
}

PromptState load_prompt(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompt file " + path.string());
  return PromptState::from_json(nlohmann::json::parse(in));
}

void save_prompt(const std::filesystem::path& path, const PromptState& state) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write prompt file " + path.string());
  out << state.to_json().dump(2) << '\n';
}

std::string render_prompt(const PromptState& state, std::string_view query) {
  std::string out = state.instruction;
  out += "\n\n";
  for (const auto& e : state.examples) {
    out += "Example: " + e.source + "\n\n";
    out += "Counterfactual: " + e.counterfactual + "\n\n";
  }
  out += "Example: ";
  out += query;
  out += "\n\nCounterfactual:";
  return out;
}

CounterfactualPair rewrite(ChatService& client, const PromptState& state, const Review& source,
                           const RewriteOptions& options) {
  if (source.rating != 5) throw std::invalid_argument("rewrite source must be rated 5");
  CounterfactualPair pair;
  pair.positive = source;
  pair.negative.review_id = source.review_id + "#cf";
  pair.negative.product_id = source.product_id;
  pair.negative.rating = 1;
  pair.negative.text = generate(client, state, source.text, options);
  pair.origin = PairOrigin::kLlmRewrite;
  return pair;
}

double normalized_edit_distance(std::string_view a, std::string_view b) {
  const auto x = split_words(a), y = split_words(b);
  if (x.empty() && y.empty()) return 0.0;
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[y.size()]) / static_cast<double>(std::max(x.size(), y.size()));
}

int ReferenceEvaluator::verdict(std::string_view source, std::string_view rewrite) const {
  return judge_.is_negative(rewrite) && normalized_edit_distance(source, rewrite) <= max_edit_ ? 1 : 0;
}

std::vector<int> score_items(const PromptState& state, const std::vector<Review>& testset,
                             ChatService& client, const Evaluator& evaluator, int workers,
                             const RewriteOptions& options) {
  std::vector<int> verdicts(testset.size(), 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < testset.size(); i = next++) {
      try {
        const std::string out = generate(client, state, testset[i].text, options);
        verdicts[i] = evaluator.verdict(testset[i].text, out) ? 1 : 0;
      } catch (const RejectionError&) {
        verdicts[i] = 0;
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = testset.size();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(testset.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return verdicts;
}

double score_prompt(const PromptState& state, const std::vector<Review>& testset,
                    ChatService& client, const Evaluator& evaluator, int workers,
                    const RewriteOptions& options) {
  if (testset.empty()) throw std::invalid_argument("score_prompt needs a non-empty test set");
  const auto v = score_items(state, testset, client, evaluator, workers, options);
  double sum = 0;
  for (int x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

void EvalSet::validate() const {
  if (m < 0 || n < 0 || static_cast<std::size_t>(m + n) != items.size())
    throw std::invalid_argument("eval set size must equal m + n");
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kThreshold: return "threshold";
    case StopReason::kNoImprovement: return "no_improvement";
    case StopReason::kPoolExhausted: return "pool_exhausted";
    case StopReason::kResidueEmpty: return "residue_empty";
  }
  return "?";
}

nlohmann::json OptimizeResult::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& it : trace)
    t.push_back({{"chosen", it.chosen},
                 {"test_indices", it.test_indices},
                 {"permutation_scores", it.permutation_scores},
                 {"best_position", it.best_position},
                 {"baseline", it.baseline},
                 {"score", it.score}});
  return {{"prompt", prompt.to_json()},   {"initial_score", initial_score},
          {"final_score", final_score},   {"stop_reason", to_string(reason)},
          {"warning", warning},           {"trace", t}};
}

OptimizeResult optimize_prompt(const PromptState& seed, const EvalSet& evalset,
                               ChatService& client, const Evaluator& evaluator,
                               const Annotator& annotate, const OptimizeOptions& options) {
  evalset.validate();
  seed.validate();
  if (evalset.items.size() < 2) throw std::invalid_argument("eval set needs at least two items");
  if (!(options.delta > 0 && options.delta <= 1)) throw std::invalid_argument("delta must lie in (0,1]");
  if (!(options.epsilon > 0 && options.epsilon <= 1)) throw std::invalid_argument("epsilon must lie in (0,1]");
  if (!annotate) throw std::invalid_argument("optimize_prompt needs an annotator");

  const auto& items = evalset.items;
  OptimizeResult result;
  result.prompt = seed;
  std::mt19937_64 rng(options.seed);

  // Latest verdict for every item, taken under the prompt that produced it.
  std::vector<int> verdict = score_items(seed, items, client, evaluator, options.workers, options.rewrite);
  double total = 0;
  for (int v : verdict) total += v;
  result.initial_score = result.final_score = total / static_cast<double>(items.size());

  std::set<std::size_t> inserted;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!verdict[i]) pool.push_back(i);

  while (true) {
    if (pool.empty()) {
      result.reason = StopReason::kPoolExhausted;
      result.warning = true;
      break;
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t chosen = pool[pick(rng)];
    const PromptExample example{items[chosen].text, annotate(items[chosen])};
    inserted.insert(chosen);

    OptimizeIteration it;
    it.chosen = chosen;
    std::vector<Review> residue;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (!inserted.count(i)) {
        it.test_indices.push_back(i);
        residue.push_back(items[i]);
      }
    const auto& current = result.prompt.examples;
    if (residue.empty()) {
      result.prompt.examples.insert(result.prompt.examples.end(), example);
      result.reason = StopReason::kResidueEmpty;
      result.trace.push_back(it);
      break;
    }

    std::vector<int> best_verdicts;
    for (std::size_t pos = 0; pos <= current.size(); ++pos) {
      PromptState candidate = result.prompt;
      candidate.examples.insert(candidate.examples.begin() + static_cast<std::ptrdiff_t>(pos), example);
      auto v = score_items(candidate, residue, client, evaluator, options.workers, options.rewrite);
      double s = 0;
      for (int x : v) s += x;
      s /= static_cast<double>(v.size());
      it.permutation_scores.push_back(s);
      if (pos == 0 || s > it.score) {  // strict: earliest position wins ties
        it.score = s;
        it.best_position = pos;
        best_verdicts = std::move(v);
      }
    }
    double base = 0;
    for (std::size_t i : it.test_indices) base += verdict[i];
    it.baseline = base / static_cast<double>(it.test_indices.size());

    result.prompt.examples.insert(
        result.prompt.examples.begin() + static_cast<std::ptrdiff_t>(it.best_position), example);
    pool.clear();
    for (std::size_t k = 0; k < it.test_indices.size(); ++k) {
      verdict[it.test_indices[k]] = best_verdicts[k];
      if (!best_verdicts[k]) pool.push_back(it.test_indices[k]);
    }
    result.final_score = it.score;
    result.trace.push_back(it);

    if (it.score > options.delta) {
      result.reason = StopReason::kThreshold;
      break;
    }
    if (it.score - it.baseline < options.epsilon) {
      result.reason = StopReason::kNoImprovement;
      break;
    }
  }
  return result;
}

}  // namespace cfaug
