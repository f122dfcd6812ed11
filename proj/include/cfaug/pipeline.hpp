#pragma once

// Config-driven orchestration of the stages. Every stage reads and writes
// files under the work directory so each one can be re-run on its own.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfaug/disae.hpp"
#include "cfaug/llm_rewrite.hpp"
#include "cfaug/reproduction.hpp"
#include "cfaug/training.hpp"

namespace cfaug {

/// Bad configuration or a missing stage prerequisite (exit code 1).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct PipelineConfig {
  // [paths]; relative entries resolve against the config file directory
  std::filesystem::path corpus;
  std::string corpus_format = "jsonl";
  std::filesystem::path work_dir = "work";
  std::filesystem::path seed_prompt;  // empty: default instruction, no examples
  std::filesystem::path evalset;      // empty: sampled from rating-5 reviews
  std::filesystem::path annotations;  // {source: counterfactual}; empty: lexicon flip
  std::filesystem::path canned;       // mock service canned answers
  std::filesystem::path eval_reviews; // summary inputs; empty: corpus

  // [corpus]
  int min_freq = 2;

  // [prompt]
  int k = 5;
  double temperature = 0.2;
  int m = 40;
  int n = 10;
  double delta = 0.8;
  double epsilon = 0.1;
  std::string model_name = "gpt-3.5-turbo";
  int max_attempts = 3;
  std::size_t max_rewrites = 0;  // 0 rewrites every rating-5 review

  // [service]
  std::string endpoint = "https://api.openai.com";
  std::string endpoint_path = "/v1/chat/completions";
  std::string api_key_env = "CFAUG_API_KEY";
  double timeout_seconds = 60.0;
  bool mock = false;

  DisAEConfig model;  // vocab_size is filled in from the data
  std::string scalar = "float";
  TrainConfig train;

  // [summarizer]
  int summarizer_epochs = 10;
  double summarizer_lr = 3e-3;
  int summarizer_batch = 4;
  int summarizer_content_dim = 0;  // 0 keeps model.content_dim
  std::size_t summary_group = 8;

  FilterConfig filter;

  // [reproduce]
  std::size_t quota = 10;
  std::size_t max_parents = 0;
  std::vector<std::string> products;  // empty: every product

  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Reads an INI file; `overrides` are "section.key=value" and win over the file.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {});

const std::vector<std::string>& pipeline_stages();

struct CommandOptions {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> resume_from;
  std::optional<std::string> service_endpoint;
  bool mock_service = false;
};

/// Runs one subcommand. Returns 0 on success, 1 on validation errors and
/// 2 on runtime failures.
int run_command(const std::string& command, const CommandOptions& options, std::ostream& out,
                std::ostream& log);

}  // namespace cfaug
