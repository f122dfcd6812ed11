#pragma once

// Chat-style text generation service. Request body:
//   {"model": ..., "temperature": ..., "messages": [{"role": "user", "content": prompt}]}
// The completion is read from choices[0].message.content.

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace cfaug {

/// Retryable service failure; attempts() counts calls made so far.
class ServiceError : public std::runtime_error {
 public:
  explicit ServiceError(const std::string& what, int attempts = 1)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// The service answered but the answer is unusable (e.g. empty).
class RejectionError : public std::runtime_error {
 public:
  explicit RejectionError(const std::string& what) : std::runtime_error(what) {}
};

struct ChatRequest {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.2;
  std::string prompt;
};

nlohmann::json chat_request_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const nlohmann::json& body);
nlohmann::json chat_response_json(const std::string& completion);
/// Throws ServiceError when the body does not carry a completion.
std::string completion_from_response(const nlohmann::json& body);

/// Must be safe to call from several threads at once.
class ChatService {
 public:
  virtual ~ChatService() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpClientOptions {
  std::string endpoint = "https://api.openai.com";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string api_key;
  double timeout_seconds = 60.0;
  int max_concurrent = 4;
};

class HttpChatClient : public ChatService {
 public:
  explicit HttpChatClient(HttpClientOptions options);
  std::string complete(const ChatRequest& request) override;

 private:
  HttpClientOptions options_;
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
};

/// Replaces positive lexicon words by their negative partner, keeping case.
std::string flip_polarity(std::string_view text);

/// The text after the final "Example: " block of a rendered prompt.
std::string extract_query(std::string_view prompt);

/// Deterministic offline service: canned answers keyed by query text,
/// otherwise a lexicon polarity flip. Goes through the same JSON contract.
class MockChatService : public ChatService {
 public:
  MockChatService() = default;
  explicit MockChatService(std::map<std::string, std::string> canned);

  std::string complete(const ChatRequest& request) override;
  nlohmann::json handle(const nlohmann::json& request_body) const;
  long calls() const { return calls_.load(); }

 private:
  std::map<std::string, std::string> canned_;
  std::atomic<long> calls_{0};
};

/// JSON object {source: counterfactual}.
std::map<std::string, std::string> load_canned_responses(const std::filesystem::path& path);

}  // namespace cfaug
