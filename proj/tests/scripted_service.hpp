#pragma once

// Scripted generation service and evaluator for exercising the prompt
// optimizer without any language model behind it.

#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "cfaug/llm_rewrite.hpp"

namespace cfaug::testing {

struct ScriptedCall {
  std::string query;
  std::vector<std::string> demo_sources;  // in prompt order
};

/// Answers "NEG <query>" when `succeed` says so and echoes the query otherwise.
class ScriptedService : public ChatService {
 public:
  using Rule = std::function<bool(const ScriptedCall&)>;
  explicit ScriptedService(Rule succeed) : succeed_(std::move(succeed)) {}

  std::string complete(const ChatRequest& request) override {
    ScriptedCall call;
    call.query = extract_query(request.prompt);
    const std::string tag = "Example: ";
    std::size_t at = 0;
    while ((at = request.prompt.find(tag, at)) != std::string::npos) {
      at += tag.size();
      const auto end = request.prompt.find("\n\nCounterfactual:", at);
      call.demo_sources.push_back(request.prompt.substr(at, end - at));
    }
    call.demo_sources.pop_back();  // the last block is the query
    const bool ok = succeed_(call);
    std::lock_guard lock(mu_);
    calls_.push_back(call);
    return ok ? "NEG " + call.query : call.query;
  }

  std::vector<ScriptedCall> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }
  void clear() {
    std::lock_guard lock(mu_);
    calls_.clear();
  }

 private:
  Rule succeed_;
  mutable std::mutex mu_;
  std::vector<ScriptedCall> calls_;
};

class ScriptedEvaluator : public Evaluator {
 public:
  int verdict(std::string_view, std::string_view rewrite) const override {
    return rewrite.substr(0, 4) == "NEG " ? 1 : 0;
  }
};

/// n distinct rating-5 items "item k".
inline EvalSet scripted_evalset(int m, int n) {
  EvalSet s;
  s.m = m;
  s.n = n;
  for (int k = 0; k < m + n; ++k)
    s.items.push_back({"e" + std::to_string(k), "p", "item " + std::to_string(k), 5});
  return s;
}

inline std::string scripted_annotation(const Review& r) { return "NEG " + r.text; }

}  // namespace cfaug::testing
