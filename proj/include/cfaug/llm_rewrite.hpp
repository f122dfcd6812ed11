#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfaug/chat_client.hpp"
#include "cfaug/corpus.hpp"
#include "cfaug/sentiment.hpp"

namespace cfaug {

inline constexpr std::string_view kDefaultInstruction =
    "Your task is to generate a counterfactual that retains internal coherence and avoids "
    "unnecessary changes.";

struct PromptExample {
  std::string source;
  std::string counterfactual;

  bool operator==(const PromptExample&) const = default;
};

/// Instruction plus ordered demonstrations.
struct PromptState {
  std::string instruction{kDefaultInstruction};
  std::vector<PromptExample> examples;
  double temperature = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
  static PromptState from_json(const nlohmann::json& j);
  bool operator==(const PromptState&) const = default;
};

PromptState load_prompt(const std::filesystem::path& path);
void save_prompt(const std::filesystem::path& path, const PromptState& state);

/// instruction, then "Example: x\n\nCounterfactual: y" blocks, then the query
/// with an empty Counterfactual slot.
std::string render_prompt(const PromptState& state, std::string_view query);
inline std::string render_prompt(const PromptState& state, const Review& query) {
  return render_prompt(state, query.text);
}

struct RewriteOptions {
  std::string model = "gpt-3.5-turbo";
  int max_attempts = 3;
};

/// Rating-5 source in, llm_rewrite pair out. Exhausted retries rethrow
/// ServiceError with the attempt count; an empty completion is a RejectionError.
CounterfactualPair rewrite(ChatService& client, const PromptState& state, const Review& source,
                           const RewriteOptions& options = {});

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual int verdict(std::string_view source, std::string_view rewrite) const = 0;
};

/// Token-level Levenshtein distance over max(len), 0 for two empty texts.
double normalized_edit_distance(std::string_view a, std::string_view b);

/// 1 iff the judge calls the rewrite negative and the edit distance is small.
class ReferenceEvaluator : public Evaluator {
 public:
  explicit ReferenceEvaluator(const SentimentJudge& judge, double max_edit_distance = 0.6)
      : judge_(judge), max_edit_(max_edit_distance) {}
  int verdict(std::string_view source, std::string_view rewrite) const override;

 private:
  const SentimentJudge& judge_;
  double max_edit_;
};

/// Per-item verdicts in testset order. workers bounds concurrent service calls.
std::vector<int> score_items(const PromptState& state, const std::vector<Review>& testset,
                             ChatService& client, const Evaluator& evaluator, int workers = 1,
                             const RewriteOptions& options = {});

/// Success rate in [0,1].
double score_prompt(const PromptState& state, const std::vector<Review>& testset,
                    ChatService& client, const Evaluator& evaluator, int workers = 1,
                    const RewriteOptions& options = {});

/// Items made of m problem and n reasonable transformations.
struct EvalSet {
  std::vector<Review> items;
  int m = 0;
  int n = 0;

  void validate() const;
};

/// Supplies the counterfactual y_t for a chosen source x_t.
using Annotator = std::function<std::string(const Review&)>;

struct OptimizeOptions {
  double delta = 0.8;
  double epsilon = 0.1;
  std::uint64_t seed = 0;
  int workers = 1;
  RewriteOptions rewrite;
};

enum class StopReason { kThreshold, kNoImprovement, kPoolExhausted, kResidueEmpty };

std::string_view to_string(StopReason r);

struct OptimizeIteration {
  std::size_t chosen = 0;                 // index into the eval set
  std::vector<std::size_t> test_indices;  // residue scored this iteration
  std::vector<double> permutation_scores; // one per insertion position
  std::size_t best_position = 0;
  double baseline = 0.0;                  // previous prompt on the same residue
  double score = 0.0;
};

struct OptimizeResult {
  PromptState prompt;
  double initial_score = 0.0;
  double final_score = 0.0;
  StopReason reason = StopReason::kThreshold;
  bool warning = false;  // candidate pool ran dry before a stopping rule fired
  std::vector<OptimizeIteration> trace;

  nlohmann::json to_json() const;
};

OptimizeResult optimize_prompt(const PromptState& seed, const EvalSet& evalset,
                               ChatService& client, const Evaluator& evaluator,
                               const Annotator& annotate, const OptimizeOptions& options = {});

}  // namespace cfaug
