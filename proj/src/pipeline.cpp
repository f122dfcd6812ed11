#include "cfaug/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cfaug/checkpoint.hpp"
#include "cfaug/evaluation.hpp"

namespace cfaug {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

/// Typed reads from the INI tree that remember which keys were used.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& key, T& target) {
    used_.insert(key);
    auto node = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!node) return;
    std::istringstream in(*node);
    T value{};
    if constexpr (std::is_same_v<T, bool>) {
      std::string s = *node;
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
      if (s == "true" || s == "1" || s == "yes" || s == "on") value = true;
      else if (s == "false" || s == "0" || s == "no" || s == "off") value = false;
      else throw ValidationError("config key " + key + ": expected a boolean, got '" + *node + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
      value = *node;
    } else {
      in >> value;
      if (!in || !(in >> std::ws).eof())
        throw ValidationError("config key " + key + ": cannot parse '" + *node + "'");
    }
    target = value;
  }

  void path(const std::string& key, fs::path& target, const fs::path& base) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    fs::path p(s);
    target = p.is_absolute() ? p : base / p;
  }

  void check_unknown() const {
    for (const auto& [section, children] : tree_) {
      if (children.empty()) throw ValidationError("config key '" + section + "' outside a section");
      for (const auto& [key, _] : children)
        if (!used_.count(section + "." + key))
          throw ValidationError("unknown config key '" + section + "." + key + "'");
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  if (corpus.empty()) throw ValidationError("paths.corpus is required");
  if (corpus_format != "jsonl" && corpus_format != "tsv")
    throw ValidationError("paths.corpus_format must be jsonl or tsv");
  if (min_freq < 1) throw ValidationError("corpus.min_freq must be >= 1");
  if (k < 0) throw ValidationError("prompt.k must be >= 0");
  if (!(temperature >= 0 && temperature <= 1)) throw ValidationError("prompt.temperature must lie in [0,1]");
  if (m < 0 || n < 0 || m + n < 2) throw ValidationError("prompt.m + prompt.n must be >= 2");
  if (!(delta > 0 && delta <= 1)) throw ValidationError("prompt.delta must lie in (0,1]");
  if (!(epsilon > 0 && epsilon <= 1)) throw ValidationError("prompt.epsilon must lie in (0,1]");
  if (max_attempts < 1) throw ValidationError("prompt.max_attempts must be >= 1");
  if (!(timeout_seconds > 0)) throw ValidationError("service.timeout must be > 0");
  if (scalar != "float" && scalar != "double") throw ValidationError("train.scalar must be float or double");
  if (summarizer_epochs < 0) throw ValidationError("summarizer.epochs must be >= 0");
  if (!(summarizer_lr > 0)) throw ValidationError("summarizer.learning_rate must be > 0");
  if (summarizer_batch < 1) throw ValidationError("summarizer.batch_size must be >= 1");
  if (summarizer_content_dim < 0) throw ValidationError("summarizer.content_dim must be >= 0");
  if (summary_group < 1) throw ValidationError("summarizer.group must be >= 1");
  if (workers < 1) throw ValidationError("workers must be >= 1");
  try {
    DisAEConfig probe = model;
    probe.vocab_size = std::max(probe.vocab_size, Vocabulary::kNumSpecial + 1);
    probe.validate();
    train.validate();
    filter.validate();
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json m_json = model.to_json();
  m_json.erase("vocab_size");
  return {
      {"paths",
       {{"corpus", corpus.string()},
        {"corpus_format", corpus_format},
        {"work_dir", work_dir.string()},
        {"seed_prompt", seed_prompt.string()},
        {"evalset", evalset.string()},
        {"annotations", annotations.string()},
        {"canned", canned.string()},
        {"eval_reviews", eval_reviews.string()}}},
      {"corpus", {{"min_freq", min_freq}}},
      {"prompt",
       {{"k", k},
        {"temperature", temperature},
        {"m", m},
        {"n", n},
        {"delta", delta},
        {"epsilon", epsilon},
        {"model", model_name},
        {"max_attempts", max_attempts},
        {"max_rewrites", max_rewrites}}},
      {"service",
       {{"endpoint", endpoint},
        {"path", endpoint_path},
        {"api_key_env", api_key_env},
        {"timeout", timeout_seconds},
        {"mock", mock}}},
      {"model", m_json},
      {"train",
       {{"scalar", scalar},
        {"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"anneal_fraction", train.anneal_fraction},
        {"anneal_steps", train.anneal_steps},
        {"alpha_max", train.alpha_max},
        {"beta_max", train.beta_max},
        {"gamma_max", train.gamma_max},
        {"clip_norm", train.clip_norm},
        {"checkpoint_every", train.checkpoint_every}}},
      {"summarizer",
       {{"epochs", summarizer_epochs},
        {"learning_rate", summarizer_lr},
        {"batch_size", summarizer_batch},
        {"content_dim", summarizer_content_dim},
        {"group", summary_group}}},
      {"filter", {{"ppl_threshold", filter.ppl_threshold}, {"min_chars", filter.min_chars}}},
      {"reproduce", {{"quota", quota}, {"max_parents", max_parents}, {"products", join(products)}}},
      {"run", {{"seed", seed}, {"workers", workers}}}};
}

PipelineConfig load_pipeline_config(const fs::path& path, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("cannot read config: ") + e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ValidationError("override must look like section.key=value: '" + o + "'");
    tree.put(pt::ptree::path_type(o.substr(0, eq), '.'), o.substr(eq + 1));
  }

  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  PipelineConfig c;
  Reader r(tree);
  r.path("paths.corpus", c.corpus, base);
  r.get("paths.corpus_format", c.corpus_format);
  c.work_dir.clear();
  r.path("paths.work_dir", c.work_dir, base);
  if (c.work_dir.empty()) c.work_dir = base / "work";
  r.path("paths.seed_prompt", c.seed_prompt, base);
  r.path("paths.evalset", c.evalset, base);
  r.path("paths.annotations", c.annotations, base);
  r.path("paths.canned", c.canned, base);
  r.path("paths.eval_reviews", c.eval_reviews, base);

  r.get("corpus.min_freq", c.min_freq);
  r.get("corpus.max_encode_length", c.model.max_encode_length);

  r.get("prompt.k", c.k);
  r.get("prompt.temperature", c.temperature);
  r.get("prompt.m", c.m);
  r.get("prompt.n", c.n);
  r.get("prompt.delta", c.delta);
  r.get("prompt.epsilon", c.epsilon);
  r.get("prompt.model", c.model_name);
  r.get("prompt.max_attempts", c.max_attempts);
  r.get("prompt.max_rewrites", c.max_rewrites);

  r.get("service.endpoint", c.endpoint);
  r.get("service.path", c.endpoint_path);
  r.get("service.api_key_env", c.api_key_env);
  r.get("service.timeout", c.timeout_seconds);
  r.get("service.mock", c.mock);

  r.get("model.embedding_dim", c.model.embedding_dim);
  r.get("model.hidden_dim", c.model.hidden_dim);
  r.get("model.sentiment_dim", c.model.sentiment_dim);
  r.get("model.content_dim", c.model.content_dim);
  r.get("model.num_classes", c.model.num_classes);
  r.get("model.max_decode_length", c.model.max_decode_length);
  r.get("model.beam_width", c.model.beam_width);
  r.get("model.prob_floor", c.model.prob_floor);

  r.get("train.scalar", c.scalar);
  r.get("train.learning_rate", c.train.learning_rate);
  r.get("train.batch_size", c.train.batch_size);
  r.get("train.epochs", c.train.epochs);
  r.get("train.anneal_fraction", c.train.anneal_fraction);
  r.get("train.anneal_steps", c.train.anneal_steps);
  r.get("train.alpha_max", c.train.alpha_max);
  r.get("train.beta_max", c.train.beta_max);
  r.get("train.gamma_max", c.train.gamma_max);
  r.get("train.clip_norm", c.train.clip_norm);
  r.get("train.checkpoint_every", c.train.checkpoint_every);

  r.get("summarizer.epochs", c.summarizer_epochs);
  r.get("summarizer.learning_rate", c.summarizer_lr);
  r.get("summarizer.batch_size", c.summarizer_batch);
  r.get("summarizer.content_dim", c.summarizer_content_dim);
  r.get("summarizer.group", c.summary_group);

  r.get("filter.ppl_threshold", c.filter.ppl_threshold);
  r.get("filter.min_chars", c.filter.min_chars);

  r.get("reproduce.quota", c.quota);
  r.get("reproduce.max_parents", c.max_parents);
  std::string products;
  r.get("reproduce.products", products);
  c.products = split_list(products);

  r.get("run.seed", c.seed);
  r.get("run.workers", c.workers);
  r.check_unknown();
  return c;
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {"stats", "optimize-prompt", "rewrite",
                                                  "train", "reproduce",       "evaluate"};
  return stages;
}

namespace {

struct Artifacts {
  fs::path dir;
  fs::path stats() const { return dir / "stats.json"; }
  fs::path prompt() const { return dir / "prompt.json"; }
  fs::path optimize_trace() const { return dir / "optimize_trace.json"; }
  fs::path seed_pairs() const { return dir / "seed_pairs.jsonl"; }
  fs::path checkpoint() const { return dir / "disae.ckpt"; }
  fs::path train_log() const { return dir / "train_log.jsonl"; }
  fs::path augmented_pairs() const { return dir / "augmented_pairs.jsonl"; }
  fs::path audit() const { return dir / "audit.json"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path effective_config() const { return dir / "effective_config.json"; }
};

void require(const fs::path& p, const std::string& stage, const std::string& what) {
  if (!fs::exists(p))
    throw ValidationError("stage '" + stage + "' needs " + what + " (" + p.string() + ")");
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

class Context {
 public:
  Context(PipelineConfig cfg, std::ostream& out, std::ostream& log)
      : cfg_(std::move(cfg)), art_{cfg_.work_dir}, out_(out), log_(log) {}

  void run(const std::string& stage) {
    log_ << "[stage] " << stage << '\n';
    stage_ = stage;
    if (stage == "stats") stats();
    else if (stage == "optimize-prompt") optimize();
    else if (stage == "rewrite") rewrite_stage();
    else if (stage == "train") dispatch([this](auto tag) { train_stage(tag); });
    else if (stage == "reproduce") dispatch([this](auto tag) { reproduce_stage(tag); });
    else if (stage == "evaluate") dispatch([this](auto tag) { evaluate_stage(tag); });
    else throw ValidationError("unknown stage '" + stage + "'");
  }

 private:
  template <typename F>
  void dispatch(F&& f) {
    if (cfg_.scalar == "double") f(double{});
    else f(float{});
  }

  const ReviewSet& corpus() {
    if (!corpus_) {
      require(cfg_.corpus, stage_, "the review corpus");
      corpus_ = std::make_unique<ReviewSet>(
          load_reviews(cfg_.corpus, parse_review_format(cfg_.corpus_format)));
    }
    return *corpus_;
  }

  const BowSentimentJudge& judge() {
    if (!judge_) judge_ = std::make_unique<BowSentimentJudge>(corpus().reviews(), LogisticOptions{30, 0.5, 1e-4, cfg_.seed, false});
    return *judge_;
  }

  ChatService& service() {
    if (!service_) {
      if (cfg_.mock) {
        std::map<std::string, std::string> canned;
        if (!cfg_.canned.empty()) canned = load_canned_responses(cfg_.canned);
        service_ = std::make_unique<MockChatService>(std::move(canned));
      } else {
        HttpClientOptions o;
        o.endpoint = cfg_.endpoint;
        o.path = cfg_.endpoint_path;
        o.timeout_seconds = cfg_.timeout_seconds;
        o.max_concurrent = cfg_.workers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) o.api_key = key;
        else log_ << "[warn] environment variable " << cfg_.api_key_env << " is not set\n";
        service_ = std::make_unique<HttpChatClient>(std::move(o));
      }
    }
    return *service_;
  }

  PromptState seed_prompt() const {
    PromptState p;
    if (!cfg_.seed_prompt.empty()) {
      require(cfg_.seed_prompt, "optimize-prompt", "the seed prompt file");
      p = load_prompt(cfg_.seed_prompt);
    }
    if (p.examples.size() > static_cast<std::size_t>(cfg_.k)) p.examples.resize(cfg_.k);
    p.temperature = cfg_.temperature;
    return p;
  }

  RewriteOptions rewrite_options() const { return {cfg_.model_name, cfg_.max_attempts}; }

  void stats() {
    const auto s = compute_distribution(corpus());
    nlohmann::json j = {{"total", s.total}, {"positive_fraction", s.positive_fraction},
                        {"histogram", s.histogram}};
    write_json(art_.stats(), j);
    out_ << "total " << s.total << '\n';
    out_ << "positive_fraction " << std::fixed << std::setprecision(3) << s.positive_fraction << '\n';
    out_ << "histogram";
    for (int r = 0; r < 5; ++r) out_ << ' ' << (r + 1) << ':' << s.histogram[r];
    out_ << '\n';
    out_.unsetf(std::ios::floatfield);
  }

  void optimize() {
    EvalSet evalset;
    if (!cfg_.evalset.empty()) {
      require(cfg_.evalset, "optimize-prompt", "the evaluation set");
      evalset.items = load_reviews(cfg_.evalset).reviews();
      if (static_cast<std::size_t>(cfg_.m + cfg_.n) != evalset.items.size())
        throw ValidationError("prompt.m + prompt.n must equal the evaluation set size");
      evalset.m = cfg_.m;
      evalset.n = cfg_.n;
    } else {
      auto pool = select_rewrite_sources(corpus());
      std::mt19937_64 rng(cfg_.seed);
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t want = static_cast<std::size_t>(cfg_.m + cfg_.n);
      if (pool.size() > want) pool.resize(want);
      if (pool.size() < 2) throw ValidationError("optimize-prompt needs at least two rating-5 reviews");
      evalset.m = static_cast<int>(std::lround(static_cast<double>(cfg_.m) * pool.size() / want));
      evalset.n = static_cast<int>(pool.size()) - evalset.m;
      evalset.items = std::move(pool);
    }
    std::map<std::string, std::string> notes;
    if (!cfg_.annotations.empty()) {
      require(cfg_.annotations, "optimize-prompt", "the annotation file");
      notes = load_canned_responses(cfg_.annotations);
    }
    std::size_t fallbacks = 0;
    Annotator annotate = [&](const Review& r) {
      auto it = notes.find(r.text);
      if (it != notes.end()) return it->second;
      ++fallbacks;
      return flip_polarity(r.text);
    };
    ReferenceEvaluator evaluator(judge());
    OptimizeOptions o{cfg_.delta, cfg_.epsilon, cfg_.seed, cfg_.workers, rewrite_options()};
    const auto result = optimize_prompt(seed_prompt(), evalset, service(), evaluator, annotate, o);
    if (fallbacks) log_ << "[warn] " << fallbacks << " annotation(s) fell back to the lexicon flip\n";
    if (result.warning) log_ << "[warn] candidate pool exhausted before a stopping rule fired\n";
    save_prompt(art_.prompt(), result.prompt);
    write_json(art_.optimize_trace(), result.to_json());
    out_ << "prompt_examples " << result.prompt.examples.size() << '\n';
    out_ << "initial_score " << result.initial_score << '\n';
    out_ << "final_score " << result.final_score << '\n';
    out_ << "stop_reason " << to_string(result.reason) << '\n';
  }

  void rewrite_stage() {
    const PromptState prompt = fs::exists(art_.prompt()) ? load_prompt(art_.prompt()) : seed_prompt();
    auto sources = select_rewrite_sources(corpus());
    if (cfg_.max_rewrites && sources.size() > cfg_.max_rewrites) sources.resize(cfg_.max_rewrites);
    std::vector<std::optional<CounterfactualPair>> slots(sources.size());
    std::vector<std::string> rejected(sources.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    ChatService& client = service();
    const auto opts = rewrite_options();
    auto work = [&] {
      for (std::size_t i = next++; i < sources.size(); i = next++) {
        try {
          slots[i] = rewrite(client, prompt, sources[i], opts);
        } catch (const RejectionError& e) {
          rejected[i] = e.what();
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = sources.size();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int k = 1; k < cfg_.workers; ++k) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    std::vector<CounterfactualPair> pairs;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i]) pairs.push_back(*slots[i]);
      else log_ << "[warn] rewrite of " << sources[i].review_id << " rejected: " << rejected[i] << '\n';
    }
    save_pairs(art_.seed_pairs(), pairs);
    out_ << "pairs " << pairs.size() << '\n';
  }

  Vocabulary vocab_for(const std::vector<CounterfactualPair>& pairs) {
    std::vector<std::string> texts;
    for (const auto& r : corpus()) texts.push_back(r.text);
    for (const auto& p : pairs) {
      texts.push_back(p.positive.text);
      texts.push_back(p.negative.text);
    }
    return build_vocab(texts, cfg_.min_freq);
  }

  template <typename Scalar>
  void train_stage(Scalar) {
    require(art_.seed_pairs(), "train", "seed pairs from the rewrite stage");
    const auto pairs = load_pairs(art_.seed_pairs());
    if (pairs.empty()) throw ValidationError("stage 'train' found no seed pairs");
    const auto vocab = vocab_for(pairs);
    DisAEConfig mc = cfg_.model;
    mc.vocab_size = vocab.size();
    DisAEModel<Scalar> model(mc, cfg_.seed);
    TrainConfig tc = cfg_.train;
    tc.seed = cfg_.seed;
    tc.checkpoint_path = art_.checkpoint();
    std::ofstream progress(art_.train_log(), std::ios::trunc);
    const auto report = train(model, vocab, pairs, tc, &progress);
    out_ << "steps " << report.history.size() << '\n';
    if (!report.history.empty()) out_ << "final_total " << report.history.back().loss.total << '\n';
    out_ << "checkpoint " << art_.checkpoint().string() << '\n';
  }

  template <typename Scalar>
  void reproduce_stage(Scalar) {
    require(art_.checkpoint(), "reproduce", "a trained checkpoint");
    const auto ck = load_checkpoint<Scalar>(art_.checkpoint());
    std::vector<std::string> texts;
    for (const auto& r : corpus()) texts.push_back(r.text);
    TrigramFluencyScorer scorer(texts);
    ReproduceOptions o;
    o.per_product_quota = cfg_.quota;
    o.max_parents = cfg_.max_parents;
    o.seed = cfg_.seed;
    o.workers = cfg_.workers;
    o.filter = cfg_.filter;
    auto products = cfg_.products.empty() ? corpus().product_ids() : cfg_.products;
    for (const auto& p : products)
      if (!corpus().has_product(p)) throw ValidationError("unknown product '" + p + "'");
    const auto result = reproduce(ck.model, ck.vocab, corpus(), products, scorer, judge(), o);
    for (const auto& w : result.warnings) log_ << "[warn] " << w << '\n';
    save_pairs(art_.augmented_pairs(), result.pairs);
    save_audit(art_.audit(), result);
    const auto t = result.total();
    out_ << "generated " << t.generated << "\nkept " << t.kept << "\ndropped_fluency "
         << t.dropped_fluency << "\ndropped_sentiment " << t.dropped_sentiment << '\n';
  }

  template <typename Scalar>
  std::vector<std::string> summaries(const DisAEModel<Scalar>& model, const Vocabulary& vocab,
                                     const std::vector<std::vector<Review>>& groups) {
    std::vector<std::string> out;
    for (const auto& g : groups) out.push_back(summarize_mean(model, vocab, g));
    return out;
  }

  std::vector<std::vector<Review>> groups(const ReviewSet& set, bool negative) const {
    std::vector<std::vector<Review>> out;
    for (const auto& pid : set.product_ids()) {
      std::vector<Review> cur;
      for (std::size_t i : set.product_reviews(pid)) {
        const auto& r = set[i];
        if (negative ? r.rating > 2 : r.rating < 4) continue;
        cur.push_back(r);
        if (cur.size() == cfg_.summary_group) {
          out.push_back(std::move(cur));
          cur.clear();
        }
      }
      if (!cur.empty()) out.push_back(std::move(cur));
    }
    return out;
  }

  template <typename Scalar>
  void evaluate_stage(Scalar) {
    require(art_.checkpoint(), "evaluate", "a trained checkpoint");
    require(art_.augmented_pairs(), "evaluate", "augmented pairs from the reproduce stage");
    const auto ck = load_checkpoint<Scalar>(art_.checkpoint());
    EvaluationReport report;
    if (fs::exists(art_.seed_pairs())) {
      const auto pairs = load_pairs(art_.seed_pairs());
      if (!pairs.empty())
        report.rouge = counterfactual_reconstruction_rouge(ck.model, ck.vocab, pairs, cfg_.workers);
    }

    const auto augmented = load_pairs(art_.augmented_pairs());
    std::vector<std::string> base_texts, aug_texts;
    for (const auto& r : corpus()) base_texts.push_back(r.text);
    aug_texts = base_texts;
    for (const auto& p : augmented) aug_texts.push_back(p.negative.text);
    const auto vocab = build_vocab(aug_texts, cfg_.min_freq);
    DisAEConfig mc = cfg_.model;
    mc.vocab_size = vocab.size();
    if (cfg_.summarizer_content_dim > 0) mc.content_dim = cfg_.summarizer_content_dim;
    TrainConfig tc = cfg_.train;
    tc.seed = cfg_.seed;
    tc.epochs = cfg_.summarizer_epochs;
    tc.learning_rate = cfg_.summarizer_lr;
    tc.batch_size = cfg_.summarizer_batch;
    DisAEModel<Scalar> base(mc, cfg_.seed), aug(mc, cfg_.seed);
    train_reconstruction(base, vocab, base_texts, tc);
    train_reconstruction(aug, vocab, aug_texts, tc);

    std::unique_ptr<ReviewSet> eval_owned;
    const ReviewSet* eval = &corpus();
    if (!cfg_.eval_reviews.empty()) {
      require(cfg_.eval_reviews, "evaluate", "the evaluation reviews");
      eval_owned = std::make_unique<ReviewSet>(load_reviews(cfg_.eval_reviews));
      eval = eval_owned.get();
    }
    HybridSentimentJudge3 judge3(corpus().reviews(), LogisticOptions{30, 0.5, 1e-4, cfg_.seed, true});
    const auto neg_groups = groups(*eval, true), pos_groups = groups(*eval, false);
    SentimentReport neg_base, neg_aug, pos_base, pos_aug;
    if (!neg_groups.empty()) {
      neg_base = sentiment_precision(summaries(base, vocab, neg_groups), judge3, Polarity::kNegative);
      neg_aug = sentiment_precision(summaries(aug, vocab, neg_groups), judge3, Polarity::kNegative);
    }
    if (!pos_groups.empty()) {
      pos_base = sentiment_precision(summaries(base, vocab, pos_groups), judge3, Polarity::kPositive);
      pos_aug = sentiment_precision(summaries(aug, vocab, pos_groups), judge3, Polarity::kPositive);
    }
    nlohmann::json j = report.to_json();
    j["base"] = {{"Pos", pos_base.to_json()}, {"Neg", neg_base.to_json()}};
    j["augmented"] = {{"Pos", pos_aug.to_json()}, {"Neg", neg_aug.to_json()}};
    j["Dif"] = {{"Pos", dif(pos_base, pos_aug)}, {"Neg", dif(neg_base, neg_aug)}};
    j["groups"] = {{"Pos", pos_groups.size()}, {"Neg", neg_groups.size()}};
    j["augmented_reviews"] = augmented.size();
    write_json(art_.report(), j);
    out_ << j.dump(2) << '\n';
  }

  PipelineConfig cfg_;
  Artifacts art_;
  std::string stage_;
  std::ostream& out_;
  std::ostream& log_;
  std::unique_ptr<ReviewSet> corpus_;
  std::unique_ptr<BowSentimentJudge> judge_;
  std::unique_ptr<ChatService> service_;
};

}  // namespace

int run_command(const std::string& command, const CommandOptions& options, std::ostream& out,
                std::ostream& log) {
  const auto& stages = pipeline_stages();
  const bool is_stage = std::find(stages.begin(), stages.end(), command) != stages.end();
  if (!is_stage && command != "pipeline") {
    log << "unknown command '" << command << "'\n";
    return 1;
  }
  try {
    if (options.config.empty()) throw ValidationError("--config is required");
    if (!fs::exists(options.config)) throw ValidationError("config file not found: " + options.config.string());
    PipelineConfig cfg = load_pipeline_config(options.config, options.overrides);
    if (options.seed) cfg.seed = *options.seed;
    if (options.workers) cfg.workers = *options.workers;
    if (options.service_endpoint) cfg.endpoint = *options.service_endpoint;
    if (options.mock_service) cfg.mock = true;
    cfg.validate();
    fs::create_directories(cfg.work_dir);
    log << "[config] " << cfg.to_json().dump() << '\n';
    log << "[seed] " << cfg.seed << '\n';
    write_json(cfg.work_dir / "effective_config.json", cfg.to_json());

    Context ctx(cfg, out, log);
    if (command != "pipeline") {
      if (options.resume_from) throw ValidationError("--resume-from only applies to 'pipeline'");
      ctx.run(command);
      return 0;
    }
    std::size_t first = 0;
    if (options.resume_from) {
      auto it = std::find(stages.begin(), stages.end(), *options.resume_from);
      if (it == stages.end()) throw ValidationError("unknown stage '" + *options.resume_from + "'");
      first = static_cast<std::size_t>(it - stages.begin());
    }
    for (std::size_t i = first; i < stages.size(); ++i) ctx.run(stages[i]);
    return 0;
  } catch (const ValidationError& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace cfaug
