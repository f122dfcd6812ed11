#include "cfaug/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "cfaug/checkpoint.hpp"

namespace cfaug {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw TrainingError("learning_rate must be > 0");
  if (batch_size < 1) throw TrainingError("batch_size must be >= 1");
  if (epochs < 0) throw TrainingError("epochs must be >= 0");
  if (alpha_max < 0 || beta_max < 0 || gamma_max < 0) throw TrainingError("caps must be >= 0");
  if (anneal_steps < 0) throw TrainingError("anneal_steps must be >= 0");
  if (anneal_fraction < 0 || anneal_fraction > 1) throw TrainingError("anneal_fraction outside [0,1]");
}

double anneal_weight(long step, double cap, long anneal_steps) {
  if (step < 0) throw TrainingError("step must be >= 0");
  if (anneal_steps < 1) throw TrainingError("anneal_steps must be >= 1");
  const double ramp = std::min(static_cast<double>(step) / static_cast<double>(anneal_steps), 1.0);
  return ramp * cap;
}

long total_steps(std::size_t examples, const TrainConfig& config) {
  const long per_epoch =
      static_cast<long>((examples + config.batch_size - 1) / static_cast<std::size_t>(config.batch_size));
  return per_epoch * config.epochs;
}

long resolve_anneal_steps(long total, const TrainConfig& config) {
  if (config.anneal_steps > 0) return config.anneal_steps;
  return std::max(1L, std::lround(config.anneal_fraction * static_cast<double>(total)));
}

nlohmann::json step_record(const TrainStep& s) {
  return {{"step", s.step},           {"lr", s.lr},
          {"alpha", s.weights.alpha}, {"beta", s.weights.beta},
          {"gamma", s.weights.gamma}, {"L_rec", s.loss.rec},
          {"L_e", s.loss.emotion},    {"L_n", s.loss.neutrality},
          {"L_r", s.loss.label},      {"L_dis", s.loss.distance},
          {"L_cf", s.loss.counterfactual}, {"total", s.loss.total}};
}

template <typename Scalar>
Adam<Scalar>::Adam(const DisAEParams<Scalar>& like, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

template <typename Scalar>
void Adam<Scalar>::step(DisAEParams<Scalar>& params, const DisAEParams<Scalar>& grads, double lr) {
  ++t_;
  std::vector<nn::Mat<Scalar>*> ps, ms, vs;
  std::vector<const nn::Mat<Scalar>*> gs;
  params.visit([&](const std::string&, nn::Mat<Scalar>& m) { ps.push_back(&m); });
  m_.visit([&](const std::string&, nn::Mat<Scalar>& m) { ms.push_back(&m); });
  v_.visit([&](const std::string&, nn::Mat<Scalar>& m) { vs.push_back(&m); });
  grads.visit([&](const std::string&, const nn::Mat<Scalar>& m) { gs.push_back(&m); });
  const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto step = static_cast<Scalar>(lr / c1);
  const auto eps = static_cast<Scalar>(eps_);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i]->size() == 0) continue;
    auto g = gs[i]->array();
    ms[i]->array() = b1 * ms[i]->array() + (Scalar(1) - b1) * g;
    vs[i]->array() = b2 * vs[i]->array() + (Scalar(1) - b2) * g.square();
    ps[i]->array() -= step * ms[i]->array() / ((vs[i]->array() * inv_c2).sqrt() + eps);
  }
}

template <typename Scalar>
double clip_grad_norm(DisAEParams<Scalar>& grads, double max_norm) {
  double sq = 0.0;
  grads.visit([&](const std::string&, const nn::Mat<Scalar>& m) {
    sq += static_cast<double>(m.squaredNorm());
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto s = static_cast<Scalar>(max_norm / norm);
    grads.visit([&](const std::string&, nn::Mat<Scalar>& m) { m *= s; });
  }
  return norm;
}

namespace {

void check_finite(const LossBreakdown& b, int step) {
  const std::pair<const char*, double> terms[] = {
      {"L_rec", b.rec},      {"L_e", b.emotion},           {"L_n", b.neutrality},
      {"L_r", b.label},      {"L_dis", b.distance},        {"L_cf", b.counterfactual},
      {"total", b.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw TrainingError("non-finite " + std::string(name) + " at step " + std::to_string(step));
}

/// Shared optimization loop; `loss` evaluates example i and accumulates grads.
template <typename Scalar>
TrainReport run_loop(
    DisAEModel<Scalar>& model, std::size_t n, const TrainConfig& config, std::ostream* progress,
    const std::function<LossBreakdown(std::size_t, const LossWeights&, DisAEParams<Scalar>&)>& loss,
    const std::function<void(int)>& on_checkpoint) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  const long total = total_steps(n, config);
  if (total == 0) return report;
  const long anneal = resolve_anneal_steps(total, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Adam<Scalar> adam(model.params());
  auto grads = model.params().zeros_like();
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      TrainStep rec;
      rec.step = step;
      rec.lr = config.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(total));
      rec.weights = {anneal_weight(step, config.alpha_max, anneal),
                     anneal_weight(step, config.beta_max, anneal),
                     anneal_weight(step, config.gamma_max, anneal)};
      grads.visit([](const std::string&, nn::Mat<Scalar>& m) { m.setZero(); });
      for (std::size_t k = start; k < end; ++k) rec.loss += loss(order[k], rec.weights, grads);
      const double inv = 1.0 / static_cast<double>(end - start);
      rec.loss *= inv;
      check_finite(rec.loss, step);
      const auto s = static_cast<Scalar>(inv);
      grads.visit([s](const std::string&, nn::Mat<Scalar>& m) { m *= s; });
      clip_grad_norm(grads, config.clip_norm);
      adam.step(model.params(), grads, rec.lr);
      if (progress) *progress << step_record(rec).dump() << '\n';
      report.history.push_back(rec);
      ++step;
      if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) on_checkpoint(step);
    }
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace

template <typename Scalar>
TrainReport train_on_ids(DisAEModel<Scalar>& model, const std::vector<PairIds>& pairs,
                         const TrainConfig& config, std::ostream* progress) {
  return run_loop<Scalar>(
      model, pairs.size(), config, progress,
      [&](std::size_t i, const LossWeights& w, DisAEParams<Scalar>& g) {
        return model.pair_loss(pairs[i], w, &g);
      },
      [](int) {});
}

template <typename Scalar>
TrainReport train(DisAEModel<Scalar>& model, const Vocabulary& vocab,
                  const std::vector<CounterfactualPair>& pairs, const TrainConfig& config,
                  std::ostream* progress) {
  if (vocab.size() != model.config().vocab_size)
    throw TrainingError("vocabulary does not match model");
  std::vector<PairIds> ids;
  ids.reserve(pairs.size());
  for (const auto& p : pairs) {
    ids.push_back(make_pair_ids(p, vocab, model.config()));
    if (static_cast<int>(ids.back().positive.size()) > model.config().max_decode_length + 2 ||
        static_cast<int>(ids.back().negative.size()) > model.config().max_decode_length + 2)
      throw TrainingError("pair longer than max_decode_length: " + p.positive.review_id);
  }
  auto save = [&](int) {
    if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model, vocab);
  };
  TrainReport report = run_loop<Scalar>(
      model, ids.size(), config, progress,
      [&](std::size_t i, const LossWeights& w, DisAEParams<Scalar>& g) {
        return model.pair_loss(ids[i], w, &g);
      },
      save);
  if (!config.checkpoint_path.empty()) {
    save(0);
    report.checkpoint = config.checkpoint_path;
  }
  return report;
}

template <typename Scalar>
TrainReport train_reconstruction(DisAEModel<Scalar>& model, const Vocabulary& vocab,
                                 const std::vector<std::string>& texts, const TrainConfig& config,
                                 std::ostream* progress) {
  if (vocab.size() != model.config().vocab_size)
    throw TrainingError("vocabulary does not match model");
  const std::size_t cap = static_cast<std::size_t>(
      std::min(model.config().max_encode_length, model.config().max_decode_length + 2));
  std::vector<std::vector<int>> ids;
  ids.reserve(texts.size());
  for (const auto& t : texts) ids.push_back(vocab.encode(t, cap));
  auto save = [&](int) {
    if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model, vocab);
  };
  TrainReport report = run_loop<Scalar>(
      model, ids.size(), config, progress,
      [&](std::size_t i, const LossWeights&, DisAEParams<Scalar>& g) {
        LossBreakdown b;
        b.rec = model.sequence_loss(ids[i], &g);
        b.total = b.rec;
        return b;
      },
      save);
  if (!config.checkpoint_path.empty()) {
    save(0);
    report.checkpoint = config.checkpoint_path;
  }
  return report;
}

#define CFAUG_INSTANTIATE(S)                                                                   \
  template class Adam<S>;                                                                      \
  template double clip_grad_norm<S>(DisAEParams<S>&, double);                                  \
  template TrainReport train<S>(DisAEModel<S>&, const Vocabulary&,                             \
                                const std::vector<CounterfactualPair>&, const TrainConfig&,    \
                                std::ostream*);                                                \
  template TrainReport train_on_ids<S>(DisAEModel<S>&, const std::vector<PairIds>&,            \
                                       const TrainConfig&, std::ostream*);                     \
  template TrainReport train_reconstruction<S>(DisAEModel<S>&, const Vocabulary&,              \
                                               const std::vector<std::string>&,                \
                                               const TrainConfig&, std::ostream*);

CFAUG_INSTANTIATE(float)
CFAUG_INSTANTIATE(double)

#undef CFAUG_INSTANTIATE

}  // namespace cfaug
