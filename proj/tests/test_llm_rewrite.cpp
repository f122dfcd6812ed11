#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "cfaug/chat_client.hpp"
#include "cfaug/llm_rewrite.hpp"
#include "scripted_service.hpp"
#include "test_util.hpp"

// After the Eigen-based headers: resolv.h (pulled in here) defines `_res`.
#include <httplib.h>

using namespace cfaug;
using namespace cfaug::testing;

namespace {

const std::filesystem::path kFixtures = CFAUG_FIXTURES;
const std::filesystem::path kData = CFAUG_DATA;

class FlakyService : public ChatService {
 public:
  FlakyService(int failures, std::string answer) : failures_(failures), answer_(std::move(answer)) {}
  std::string complete(const ChatRequest&) override {
    if (calls_++ < failures_) throw ServiceError("temporarily unavailable");
    return answer_;
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  std::string answer_;
  std::atomic<int> calls_{0};
};

class WordJudge : public SentimentJudge {
 public:
  bool is_negative(std::string_view text) const override {
    for (const auto& w : split_words(text))
      if (is_negative_word(w)) return true;
    return false;
  }
};

const Review kSource{"s1", "p", "The staff were friendly and the soup was great.", 5};

}  // namespace

TEST(Prompt, RenderFormat) {
  PromptState s;
  s.instruction = "Rewrite.";
  s.examples = {{"good tea", "bad tea"}, {"nice room", "nasty room"}};
  EXPECT_EQ(render_prompt(s, "great soup"),
            "Rewrite.\n\n"
            "Example: good tea\n\nCounterfactual: bad tea\n\n"
            "Example: nice room\n\nCounterfactual: nasty room\n\n"
            "Example: great soup\n\nCounterfactual:");
  EXPECT_EQ(extract_query(render_prompt(s, "great soup")), "great soup");
}

TEST(Prompt, DefaultInstructionAndJson) {
  PromptState s;
  EXPECT_EQ(s.instruction, kDefaultInstruction);
  EXPECT_DOUBLE_EQ(s.temperature, 0.2);
  s.examples.push_back({"a", "b"});
  EXPECT_EQ(PromptState::from_json(s.to_json()), s);
  s.temperature = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Prompt, ShippedSeedPromptLoads) {
  const auto p = load_prompt(kData / "seed_prompt.json");
  EXPECT_EQ(p.instruction, kDefaultInstruction);
  EXPECT_EQ(p.examples.size(), 5u);
}

TEST(ChatContract, RequestAndResponseJson) {
  ChatRequest r{"m1", 0.3, "hello"};
  const auto j = chat_request_json(r);
  EXPECT_EQ(j["model"], "m1");
  EXPECT_EQ(j["messages"][0]["role"], "user");
  EXPECT_EQ(j["messages"][0]["content"], "hello");
  const auto back = chat_request_from_json(j);
  EXPECT_EQ(back.prompt, "hello");
  EXPECT_DOUBLE_EQ(back.temperature, 0.3);
  EXPECT_EQ(completion_from_response(chat_response_json("out")), "out");
  EXPECT_THROW(completion_from_response(nlohmann::json::object()), ServiceError);
}

TEST(MockService, FlipKeepsCase) {
  EXPECT_EQ(flip_polarity("Great food, good service!"), "Terrible food, bad service!");
  EXPECT_EQ(flip_polarity("nothing to flip"), "nothing to flip");
}

TEST(MockService, CannedAnswerForTableExample) {
  const auto canned = load_canned_responses(kFixtures / "canned_flip.json");
  ASSERT_EQ(canned.size(), 1u);
  const auto& [src, expected] = *canned.begin();
  MockChatService svc(canned);
  const auto pair = rewrite(svc, PromptState{}, Review{"y1", "p", src, 5});
  EXPECT_EQ(pair.negative.text, expected);
  EXPECT_EQ(svc.calls(), 1);
  // The plain flip would not match the curated answer.
  EXPECT_NE(flip_polarity(src), expected);
}

TEST(Rewrite, BuildsPair) {
  MockChatService svc;
  const auto pair = rewrite(svc, PromptState{}, kSource);
  EXPECT_EQ(pair.positive, kSource);
  EXPECT_EQ(pair.negative.review_id, "s1#cf");
  EXPECT_EQ(pair.negative.product_id, "p");
  EXPECT_EQ(pair.negative.rating, 1);
  EXPECT_EQ(pair.negative.text, "The staff were rude and the soup was terrible.");
  EXPECT_EQ(pair.origin, PairOrigin::kLlmRewrite);
  EXPECT_NO_THROW(validate_pair(pair));
  EXPECT_THROW(rewrite(svc, PromptState{}, Review{"s2", "p", "ok", 4}), std::invalid_argument);
}

TEST(Rewrite, RetriesThenSucceeds) {
  FlakyService svc(2, "The staff were rude.");
  const auto pair = rewrite(svc, PromptState{}, kSource, {"m", 3});
  EXPECT_EQ(pair.negative.text, "The staff were rude.");
  EXPECT_EQ(svc.calls(), 3);
}

TEST(Rewrite, ExhaustedRetriesReportAttempts) {
  FlakyService svc(10, "x");
  try {
    rewrite(svc, PromptState{}, kSource, {"m", 3});
    FAIL() << "expected ServiceError";
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(svc.calls(), 3);
}

TEST(Rewrite, EmptyCompletionIsRejected) {
  FlakyService svc(0, "   ");
  EXPECT_THROW(rewrite(svc, PromptState{}, kSource), RejectionError);
  EXPECT_EQ(svc.calls(), 1);
}

TEST(Evaluator, EditDistance) {
  EXPECT_DOUBLE_EQ(normalized_edit_distance("a b c", "a x c"), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(normalized_edit_distance("", ""), 0.0);
  EXPECT_DOUBLE_EQ(normalized_edit_distance("a b", ""), 1.0);
  EXPECT_DOUBLE_EQ(normalized_edit_distance("a b c d", "a c d"), 0.25);
}

TEST(Evaluator, ReferenceNeedsNegativeAndSmallEdit) {
  WordJudge judge;
  ReferenceEvaluator ev(judge, 0.6);
  EXPECT_EQ(ev.verdict("the soup was great", "the soup was terrible"), 1);
  EXPECT_EQ(ev.verdict("the soup was great", "the soup was great"), 0);
  EXPECT_EQ(ev.verdict("the soup was great", "terrible place overall , never again"), 0);
}

TEST(ScoreItems, ParallelMatchesSerial) {
  ScriptedService svc([](const ScriptedCall& c) { return c.query.back() % 2 == 0; });
  ScriptedEvaluator ev;
  const auto set = scripted_evalset(10, 5);
  const auto a = score_items(PromptState{}, set.items, svc, ev, 1);
  const auto b = score_items(PromptState{}, set.items, svc, ev, 4);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(score_prompt(PromptState{}, set.items, svc, ev, 3),
              std::count(a.begin(), a.end(), 1) / 15.0, 1e-12);
}

TEST(Optimize, ThresholdRuleStopsAfterOneInsertion) {
  ScriptedService svc([](const ScriptedCall& c) { return !c.demo_sources.empty(); });
  ScriptedEvaluator ev;
  const auto res = optimize_prompt(PromptState{}, scripted_evalset(8, 2), svc, ev, scripted_annotation);
  EXPECT_EQ(res.reason, StopReason::kThreshold);
  EXPECT_DOUBLE_EQ(res.initial_score, 0.0);
  EXPECT_DOUBLE_EQ(res.final_score, 1.0);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_EQ(res.trace[0].permutation_scores.size(), 1u);
  EXPECT_EQ(res.trace[0].test_indices.size(), 9u);
  EXPECT_EQ(res.prompt.examples.size(), 1u);
  EXPECT_EQ(res.prompt.examples[0].counterfactual, "NEG " + res.prompt.examples[0].source);
}

TEST(Optimize, NoImprovementRule) {
  ScriptedService svc([](const ScriptedCall&) { return false; });
  ScriptedEvaluator ev;
  const auto res = optimize_prompt(PromptState{}, scripted_evalset(5, 5), svc, ev, scripted_annotation);
  EXPECT_EQ(res.reason, StopReason::kNoImprovement);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_DOUBLE_EQ(res.trace[0].baseline, 0.0);
  EXPECT_DOUBLE_EQ(res.trace[0].score, 0.0);
}

TEST(Optimize, PermutationCountAndHeldOutTesting) {
  // Item k needs (k mod 4) + 1 demonstrations to succeed,
  // so every insertion helps a little and the loop runs several rounds.
  ScriptedService svc([](const ScriptedCall& c) {
    const int k = std::stoi(c.query.substr(5));
    return static_cast<int>(c.demo_sources.size()) >= k % 4 + 1;
  });
  ScriptedEvaluator ev;
  PromptState seed;
  seed.examples = {{"seed one", "NEG seed one"}};
  const auto set = scripted_evalset(12, 4);
  OptimizeOptions o;
  o.delta = 0.95;
  o.epsilon = 0.05;
  o.seed = 7;
  svc.clear();
  const auto res = optimize_prompt(seed, set, svc, ev, scripted_annotation, o);
  ASSERT_GE(res.trace.size(), 2u);

  const auto calls = svc.calls();
  std::size_t at = set.items.size();  // skip the initial full scoring
  std::set<std::string> inserted;
  for (std::size_t t = 0; t < res.trace.size(); ++t) {
    const auto& it = res.trace[t];
    inserted.insert(set.items[it.chosen].text);
    const std::size_t demos = seed.examples.size() + t;
    EXPECT_EQ(it.permutation_scores.size(), demos + 1);
    for (std::size_t i : it.test_indices) EXPECT_FALSE(inserted.count(set.items[i].text));
    const std::size_t expected_calls = (demos + 1) * it.test_indices.size();
    for (std::size_t c = 0; c < expected_calls; ++c, ++at) {
      ASSERT_LT(at, calls.size());
      EXPECT_FALSE(inserted.count(calls[at].query)) << calls[at].query;
      EXPECT_EQ(calls[at].demo_sources.size(), demos + 1);
    }
  }
  EXPECT_EQ(at, calls.size());
}

TEST(Optimize, EarliestPositionWinsTies) {
  ScriptedService svc([](const ScriptedCall& c) { return c.demo_sources.size() >= 2; });
  ScriptedEvaluator ev;
  PromptState seed;
  seed.examples = {{"a", "NEG a"}, {"b", "NEG b"}};
  const auto res = optimize_prompt(seed, scripted_evalset(6, 0), svc, ev, scripted_annotation);
  // The seed already scores 1 everywhere, so the pool is empty.
  EXPECT_EQ(res.reason, StopReason::kPoolExhausted);
  EXPECT_TRUE(res.warning);

  ScriptedService flat([](const ScriptedCall& c) { return c.query == "item 0"; });
  const auto r2 = optimize_prompt(seed, scripted_evalset(6, 0), flat, ev, scripted_annotation, {0.8, 0.5, 1});
  ASSERT_FALSE(r2.trace.empty());
  EXPECT_EQ(r2.trace[0].best_position, 0u);
  EXPECT_EQ(r2.trace[0].permutation_scores.size(), 3u);
}

TEST(Optimize, PreferredPositionIsChosen) {
  // Success only when the newest demonstration sits last.
  ScriptedService svc([](const ScriptedCall& c) {
    return c.demo_sources.size() == 3 && c.demo_sources.back().rfind("item", 0) == 0;
  });
  ScriptedEvaluator ev;
  PromptState seed;
  seed.examples = {{"a", "NEG a"}, {"b", "NEG b"}};
  const auto res = optimize_prompt(seed, scripted_evalset(6, 0), svc, ev, scripted_annotation);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_EQ(res.trace[0].best_position, 2u);
  EXPECT_EQ(res.reason, StopReason::kThreshold);
  EXPECT_EQ(res.prompt.examples.back().source.rfind("item", 0), 0u);
}

TEST(Optimize, ReplayDeterministic) {
  auto rule = [](const ScriptedCall& c) {
    const int k = std::stoi(c.query.substr(5));
    return static_cast<int>(c.demo_sources.size()) >= k % 3;
  };
  ScriptedEvaluator ev;
  OptimizeOptions o;
  o.seed = 11;
  o.workers = 4;
  o.delta = 0.99;
  o.epsilon = 0.01;
  ScriptedService s1(rule), s2(rule);
  const auto a = optimize_prompt(PromptState{}, scripted_evalset(15, 5), s1, ev, scripted_annotation, o);
  const auto b = optimize_prompt(PromptState{}, scripted_evalset(15, 5), s2, ev, scripted_annotation, o);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(Optimize, InputValidation) {
  ScriptedService svc([](const ScriptedCall&) { return true; });
  ScriptedEvaluator ev;
  auto bad = scripted_evalset(3, 3);
  bad.m = 1;
  EXPECT_THROW(optimize_prompt(PromptState{}, bad, svc, ev, scripted_annotation), std::invalid_argument);
  EXPECT_THROW(optimize_prompt(PromptState{}, scripted_evalset(3, 3), svc, ev, scripted_annotation,
                               {0.0, 0.1, 0}),
               std::invalid_argument);
  EXPECT_THROW(optimize_prompt(PromptState{}, scripted_evalset(3, 3), svc, ev, Annotator{}),
               std::invalid_argument);
}

// --- HTTP client against a local server ----------------------------------

namespace {

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  std::atomic<int> in_flight{0}, peak{0}, requests{0};
  std::string last_auth;
  std::mutex mu;

  LocalServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {}
      ++requests;
      {
        std::lock_guard lock(mu);
        last_auth = req.get_header_value("Authorization");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
      MockChatService mock;
      res.set_content(mock.handle(nlohmann::json::parse(req.body)).dump(), "application/json");
      --in_flight;
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
      res.status = 500;
      res.set_content("{}", "application/json");
    });
    server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json", "text/plain");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST(HttpClient, RoundTripWithBearerToken) {
  LocalServer srv;
  HttpClientOptions o;
  o.endpoint = srv.endpoint();
  o.api_key = "secret";
  o.timeout_seconds = 5;
  HttpChatClient client(o);
  const auto pair = rewrite(client, PromptState{}, kSource);
  EXPECT_EQ(pair.negative.text, "The staff were rude and the soup was terrible.");
  EXPECT_EQ(srv.last_auth, "Bearer secret");
}

TEST(HttpClient, ConcurrencyIsBounded) {
  LocalServer srv;
  HttpClientOptions o;
  o.endpoint = srv.endpoint();
  o.max_concurrent = 2;
  o.timeout_seconds = 5;
  HttpChatClient client(o);
  std::vector<Review> items;
  for (int i = 0; i < 12; ++i) items.push_back({"i" + std::to_string(i), "p", "good " + std::to_string(i), 5});
  WordJudge judge;
  ReferenceEvaluator ev(judge);
  const auto v = score_items(PromptState{}, items, client, ev, 6);
  EXPECT_EQ(std::count(v.begin(), v.end(), 1), 12);
  EXPECT_EQ(srv.requests.load(), 12);
  EXPECT_LE(srv.peak.load(), 2);
}

TEST(HttpClient, ErrorsBecomeServiceErrors) {
  LocalServer srv;
  HttpClientOptions o;
  o.endpoint = srv.endpoint();
  o.timeout_seconds = 5;
  o.path = "/broken";
  HttpChatClient broken(o);
  try {
    rewrite(broken, PromptState{}, kSource, {"m", 2});
    FAIL() << "expected ServiceError";
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.attempts(), 2);
  }
  o.path = "/garbage";
  HttpChatClient garbage(o);
  EXPECT_THROW(garbage.complete({"m", 0.2, "x"}), ServiceError);

  HttpClientOptions dead;
  dead.endpoint = "http://127.0.0.1:1";
  dead.timeout_seconds = 1;
  HttpChatClient refused(dead);
  EXPECT_THROW(refused.complete({"m", 0.2, "x"}), ServiceError);
}
