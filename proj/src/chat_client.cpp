#include "cfaug/chat_client.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <unordered_map>

// Eigen must precede httplib: resolv.h defines a _res macro.
#include "cfaug/sentiment.hpp"

#include <httplib.h>

namespace cfaug {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

nlohmann::json chat_request_json(const ChatRequest& request) {
  return {{"model", request.model},
          {"temperature", request.temperature},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})}};
}

ChatRequest chat_request_from_json(const nlohmann::json& body) {
  ChatRequest r;
  r.model = body.value("model", r.model);
  r.temperature = body.value("temperature", r.temperature);
  const auto& messages = body.at("messages");
  if (!messages.is_array() || messages.empty()) throw ServiceError("request has no messages");
  r.prompt = messages.back().at("content").get<std::string>();
  return r;
}

nlohmann::json chat_response_json(const std::string& completion) {
  return {{"object", "chat.completion"},
          {"choices", nlohmann::json::array({{{"index", 0},
                                              {"message", {{"role", "assistant"},
                                                           {"content", completion}}},
                                              {"finish_reason", "stop"}}})}};
}

std::string completion_from_response(const nlohmann::json& body) {
  try {
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed service response: ") + e.what());
  }
}

HttpChatClient::HttpChatClient(HttpClientOptions options) : options_(std::move(options)) {
  if (options_.max_concurrent < 1) throw std::invalid_argument("max_concurrent must be >= 1");
  if (!(options_.timeout_seconds > 0)) throw std::invalid_argument("timeout must be > 0");
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < options_.max_concurrent; });
    ++in_flight_;
  }
  struct Release {
    HttpChatClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  httplib::Client client(options_.endpoint);
  const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  if (!options_.api_key.empty()) client.set_bearer_token_auth(options_.api_key);
  auto res = client.Post(options_.path, chat_request_json(request).dump(), "application/json");
  if (!res) throw ServiceError("request to " + options_.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ServiceError("service returned HTTP " + std::to_string(res->status));
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("service returned invalid JSON: ") + e.what());
  }
  return completion_from_response(body);
}

std::string flip_polarity(std::string_view text) {
  static const auto table = [] {
    std::unordered_map<std::string, std::string> m;
    for (const auto& [p, n] : polarity_word_pairs()) m.emplace(p, n);
    return m;
  }();
  std::string out;
  out.reserve(text.size() + 16);
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      out.push_back(text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    std::string word(text.substr(i, j - i));
    std::string lower = word;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto it = table.find(lower);
    if (it == table.end()) {
      out += word;
    } else {
      std::string repl = it->second;
      if (std::isupper(static_cast<unsigned char>(word[0])))
        repl[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(repl[0])));
      out += repl;
    }
    i = j;
  }
  return out;
}

std::string extract_query(std::string_view prompt) {
  constexpr std::string_view kExample = "Example: ";
  constexpr std::string_view kSlot = "\n\nCounterfactual:";
  const auto at = prompt.rfind(kExample);
  if (at == std::string_view::npos) return trim(prompt);
  auto body = prompt.substr(at + kExample.size());
  const auto end = body.rfind(kSlot);
  if (end != std::string_view::npos) body = body.substr(0, end);
  return trim(body);
}

MockChatService::MockChatService(std::map<std::string, std::string> canned)
    : canned_(std::move(canned)) {}

nlohmann::json MockChatService::handle(const nlohmann::json& request_body) const {
  const ChatRequest request = chat_request_from_json(request_body);
  const std::string query = extract_query(request.prompt);
  auto it = canned_.find(query);
  return chat_response_json(it != canned_.end() ? it->second : flip_polarity(query));
}

std::string MockChatService::complete(const ChatRequest& request) {
  ++calls_;
  // Round-trip through the wire format so the mock exercises the same parsing.
  const auto wire = nlohmann::json::parse(chat_request_json(request).dump());
  return completion_from_response(nlohmann::json::parse(handle(wire).dump()));
}

std::map<std::string, std::string> load_canned_responses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open canned responses " + path.string());
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out.emplace(trim(k), v.get<std::string>());
  return out;
}

}  // namespace cfaug
