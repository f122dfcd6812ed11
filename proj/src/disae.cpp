#include "cfaug/disae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace cfaug {

void DisAEConfig::validate() const {
  if (vocab_size < Vocabulary::kNumSpecial) throw ModelError("vocab_size too small");
  if (embedding_dim < 1 || hidden_dim < 1 || sentiment_dim < 1 || content_dim < 1)
    throw ModelError("all model dimensions must be >= 1");
  if (num_classes < 2) throw ModelError("num_classes must be >= 2");
  if (max_decode_length < 1) throw ModelError("max_decode_length must be >= 1");
  if (beam_width < 1) throw ModelError("beam_width must be >= 1");
  if (max_encode_length < 2) throw ModelError("max_encode_length must be >= 2");
  if (!(prob_floor > 0.0)) throw ModelError("prob_floor must be > 0");
}

nlohmann::json DisAEConfig::to_json() const {
  return {{"vocab_size", vocab_size},       {"embedding_dim", embedding_dim},
          {"hidden_dim", hidden_dim},       {"sentiment_dim", sentiment_dim},
          {"content_dim", content_dim},     {"num_classes", num_classes},
          {"max_decode_length", max_decode_length}, {"beam_width", beam_width},
          {"max_encode_length", max_encode_length}, {"prob_floor", prob_floor}};
}

DisAEConfig DisAEConfig::from_json(const nlohmann::json& j) {
  DisAEConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.sentiment_dim = j.at("sentiment_dim").get<int>();
  c.content_dim = j.at("content_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.max_decode_length = j.at("max_decode_length").get<int>();
  c.beam_width = j.at("beam_width").get<int>();
  c.max_encode_length = j.at("max_encode_length").get<int>();
  c.prob_floor = j.at("prob_floor").get<double>();
  return c;
}

template <typename Scalar>
DisAEParams<Scalar> DisAEParams<Scalar>::zeros_like() const {
  DisAEParams out = *this;
  out.visit([](const std::string&, nn::Mat<Scalar>& m) { m.setZero(); });
  return out;
}

template <typename Scalar>
std::size_t DisAEParams<Scalar>::num_scalars() const {
  std::size_t n = 0;
  visit([&n](const std::string&, const nn::Mat<Scalar>& m) { n += m.size(); });
  return n;
}

template <typename Scalar>
nn::Vec<Scalar> LatentFactors<Scalar>::decoder_input() const {
  nn::Vec<Scalar> z(z_tilde.size() + z_c.size());
  z << z_tilde, z_c;
  return z;
}

PairIds make_pair_ids(const CounterfactualPair& pair, const Vocabulary& vocab,
                      const DisAEConfig& config) {
  PairIds ids;
  ids.positive = vocab.encode(pair.positive.text, config.max_encode_length);
  ids.negative = vocab.encode(pair.negative.text, config.max_encode_length);
  ids.positive_class = rating_to_class(pair.positive.rating, config.num_classes);
  ids.negative_class = rating_to_class(pair.negative.rating, config.num_classes);
  return ids;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  rec += o.rec;
  emotion += o.emotion;
  neutrality += o.neutrality;
  label += o.label;
  distance += o.distance;
  counterfactual += o.counterfactual;
  total += o.total;
  return *this;
}

LossBreakdown& LossBreakdown::operator*=(double s) {
  rec *= s;
  emotion *= s;
  neutrality *= s;
  label *= s;
  distance *= s;
  counterfactual *= s;
  total *= s;
  return *this;
}

namespace {

using Eigen::Index;

template <typename Scalar>
struct HeadTrace {
  nn::Mat<Scalar> keys;  // A x T, post-tanh
  nn::Vec<Scalar> alpha;
  nn::Vec<Scalar> pooled;
  nn::Vec<Scalar> z;
};

template <typename Scalar>
struct EncodeTrace {
  std::vector<int> ids;
  nn::LstmCache<Scalar> fwd;
  nn::LstmCache<Scalar> bwd;
  nn::Mat<Scalar> states;  // 2H x T
  HeadTrace<Scalar> sentiment;
  HeadTrace<Scalar> content;
};

template <typename Scalar>
struct DecodeTrace {
  nn::Vec<Scalar> z;
  nn::Vec<Scalar> h0;
  nn::LstmCache<Scalar> lstm;
  nn::Mat<Scalar> log_probs;  // V x steps
  std::vector<int> gold;
  double nll = 0.0;
};

template <typename Scalar>
struct ClassifierTrace {
  nn::Vec<Scalar> input;    // what C actually sees (post-adapter)
  nn::Vec<Scalar> raw;      // before adapter
  bool adapted = false;
  nn::Vec<Scalar> probs;
};

template <typename Scalar>
HeadTrace<Scalar> head_forward(const AttentionHead<Scalar>& head, const nn::Mat<Scalar>& states) {
  HeadTrace<Scalar> tr;
  nn::Mat<Scalar> pre = head.key * states;
  pre.colwise() += head.key_bias.col(0);
  tr.keys = pre.array().tanh().matrix();
  nn::Vec<Scalar> scores = tr.keys.transpose() * head.query.col(0);
  tr.alpha = nn::softmax(scores);
  tr.pooled = states * tr.alpha;
  tr.z = head.proj * tr.pooled + head.proj_bias.col(0);
  return tr;
}

template <typename Scalar>
void head_backward(const AttentionHead<Scalar>& head, const HeadTrace<Scalar>& tr,
                   const nn::Mat<Scalar>& states, const nn::Vec<Scalar>& dz,
                   nn::Mat<Scalar>& dstates, AttentionHead<Scalar>& grad) {
  grad.proj.noalias() += dz * tr.pooled.transpose();
  grad.proj_bias.col(0) += dz;
  nn::Vec<Scalar> dpooled = head.proj.transpose() * dz;
  dstates.noalias() += dpooled * tr.alpha.transpose();
  nn::Vec<Scalar> dalpha = states.transpose() * dpooled;
  nn::Vec<Scalar> dscores = nn::softmax_backward(tr.alpha, dalpha);
  grad.query.col(0).noalias() += tr.keys * dscores;
  nn::Mat<Scalar> dpre = (head.query.col(0) * dscores.transpose()).cwiseProduct(
      (Scalar(1) - tr.keys.array().square()).matrix());
  grad.key.noalias() += dpre * states.transpose();
  grad.key_bias.col(0) += dpre.rowwise().sum();
  dstates.noalias() += head.key.transpose() * dpre;
}

template <typename Scalar>
EncodeTrace<Scalar> encode_forward(const DisAEParams<Scalar>& p, std::span<const int> ids) {
  const Index T = static_cast<Index>(ids.size());
  if (T == 0) throw ModelError("cannot encode an empty token sequence");
  const Index V = p.embedding.cols();
  EncodeTrace<Scalar> tr;
  tr.ids.assign(ids.begin(), ids.end());
  nn::Mat<Scalar> x(p.embedding.rows(), T), xr(p.embedding.rows(), T);
  for (Index t = 0; t < T; ++t) {
    if (ids[t] < 0 || ids[t] >= V) throw ModelError("token id out of range");
    x.col(t) = p.embedding.col(ids[t]);
    xr.col(T - 1 - t) = x.col(t);
  }
  const Index H = p.enc_fwd.hidden();
  nn::Vec<Scalar> zero = nn::Vec<Scalar>::Zero(H);
  tr.fwd = nn::lstm_forward(p.enc_fwd, x, zero, zero);
  tr.bwd = nn::lstm_forward(p.enc_bwd, xr, zero, zero);
  tr.states.resize(2 * H, T);
  tr.states.topRows(H) = tr.fwd.h.rightCols(T);
  for (Index t = 0; t < T; ++t) tr.states.col(t).tail(H) = tr.bwd.h.col(T - t);
  tr.sentiment = head_forward(p.sentiment_head, tr.states);
  tr.content = head_forward(p.content_head, tr.states);
  return tr;
}

template <typename Scalar>
void encode_backward(const DisAEParams<Scalar>& p, const EncodeTrace<Scalar>& tr,
                     const nn::Vec<Scalar>& dz_e, const nn::Vec<Scalar>& dz_c,
                     DisAEParams<Scalar>& grad) {
  const Index T = tr.states.cols(), H = p.enc_fwd.hidden();
  nn::Mat<Scalar> dstates = nn::Mat<Scalar>::Zero(2 * H, T);
  head_backward(p.sentiment_head, tr.sentiment, tr.states, dz_e, dstates, grad.sentiment_head);
  head_backward(p.content_head, tr.content, tr.states, dz_c, dstates, grad.content_head);
  nn::Mat<Scalar> dh_fwd = dstates.topRows(H);
  nn::Mat<Scalar> dh_bwd(H, T);
  for (Index s = 0; s < T; ++s) dh_bwd.col(s) = dstates.col(T - 1 - s).tail(H);
  auto gf = nn::lstm_backward(p.enc_fwd, tr.fwd, dh_fwd, grad.enc_fwd);
  auto gb = nn::lstm_backward(p.enc_bwd, tr.bwd, dh_bwd, grad.enc_bwd);
  for (Index t = 0; t < T; ++t)
    grad.embedding.col(tr.ids[t]) += gf.dx.col(t) + gb.dx.col(T - 1 - t);
}

template <typename Scalar>
DecodeTrace<Scalar> decode_forward(const DisAEParams<Scalar>& p, const nn::Vec<Scalar>& z,
                                   std::span<const int> gold) {
  if (gold.size() < 2) throw ModelError("gold sequence needs at least BOS and EOS");
  const Index steps = static_cast<Index>(gold.size()) - 1;
  const Index V = p.out_w.rows();
  DecodeTrace<Scalar> tr;
  tr.z = z;
  tr.gold.assign(gold.begin(), gold.end());
  tr.h0 = (p.init_w * z + p.init_b.col(0)).array().tanh().matrix();
  nn::Vec<Scalar> c0 = nn::Vec<Scalar>::Zero(tr.h0.size());
  nn::Vec<Scalar> extra = p.dec_z * z;
  nn::Mat<Scalar> x(p.embedding.rows(), steps);
  for (Index t = 0; t < steps; ++t) {
    if (gold[t] < 0 || gold[t] >= V) throw ModelError("token id out of range");
    x.col(t) = p.embedding.col(gold[t]);
  }
  tr.lstm = nn::lstm_forward(p.dec, x, tr.h0, c0, &extra);
  nn::Mat<Scalar> logits = p.out_w * tr.lstm.h.rightCols(steps);
  logits.colwise() += p.out_b.col(0);
  tr.log_probs = nn::log_softmax_cols(logits);
  double nll = 0.0;
  for (Index t = 0; t < steps; ++t) {
    if (gold[t + 1] < 0 || gold[t + 1] >= V) throw ModelError("token id out of range");
    nll -= static_cast<double>(tr.log_probs(gold[t + 1], t));
  }
  tr.nll = nll;
  return tr;
}

/// Returns dL/dz for L = scale * nll.
template <typename Scalar>
nn::Vec<Scalar> decode_backward(const DisAEParams<Scalar>& p, const DecodeTrace<Scalar>& tr,
                                Scalar scale, DisAEParams<Scalar>& grad) {
  const Index steps = tr.log_probs.cols();
  nn::Mat<Scalar> dlogits = tr.log_probs.array().exp().matrix();
  for (Index t = 0; t < steps; ++t) dlogits(tr.gold[t + 1], t) -= Scalar(1);
  dlogits *= scale;
  const auto h_out = tr.lstm.h.rightCols(steps);
  grad.out_w.noalias() += dlogits * h_out.transpose();
  grad.out_b.col(0) += dlogits.rowwise().sum();
  nn::Mat<Scalar> dh = p.out_w.transpose() * dlogits;
  auto g = nn::lstm_backward(p.dec, tr.lstm, dh, grad.dec);
  for (Index t = 0; t < steps; ++t) grad.embedding.col(tr.gold[t]) += g.dx.col(t);
  grad.dec_z.noalias() += g.dpre_sum * tr.z.transpose();
  nn::Vec<Scalar> dz = p.dec_z.transpose() * g.dpre_sum;
  nn::Vec<Scalar> dpre0 = g.dh0.cwiseProduct((Scalar(1) - tr.h0.array().square()).matrix());
  grad.init_w.noalias() += dpre0 * tr.z.transpose();
  grad.init_b.col(0) += dpre0;
  dz.noalias() += p.init_w.transpose() * dpre0;
  return dz;
}

template <typename Scalar>
bool has_adapter(const DisAEParams<Scalar>& p) {
  return p.adapter.size() > 0;
}

template <typename Scalar>
ClassifierTrace<Scalar> classify_forward(const DisAEParams<Scalar>& p, const nn::Vec<Scalar>& v) {
  const Index d_e = p.cls_w.cols();
  ClassifierTrace<Scalar> tr;
  tr.raw = v;
  if (v.size() == d_e) {
    tr.input = v;
  } else if (has_adapter(p) && v.size() == p.adapter.cols()) {
    tr.adapted = true;
    tr.input = p.adapter * v + p.adapter_bias.col(0);
  } else {
    throw ModelError("classifier input has wrong dimension");
  }
  tr.probs = nn::softmax(p.cls_w * tr.input + p.cls_b.col(0));
  return tr;
}

/// Given dL/dprobs, accumulates classifier grads and returns dL/d(raw input).
template <typename Scalar>
nn::Vec<Scalar> classify_backward(const DisAEParams<Scalar>& p, const ClassifierTrace<Scalar>& tr,
                                  const nn::Vec<Scalar>& dprobs, DisAEParams<Scalar>& grad) {
  nn::Vec<Scalar> dlogits = nn::softmax_backward(tr.probs, dprobs);
  grad.cls_w.noalias() += dlogits * tr.input.transpose();
  grad.cls_b.col(0) += dlogits;
  nn::Vec<Scalar> dinput = p.cls_w.transpose() * dlogits;
  if (!tr.adapted) return dinput;
  grad.adapter.noalias() += dinput * tr.raw.transpose();
  grad.adapter_bias.col(0) += dinput;
  return p.adapter.transpose() * dinput;
}

/// d/dp of -log(max(p_target, floor)).
template <typename Scalar>
nn::Vec<Scalar> cross_entropy_grad(const nn::Vec<Scalar>& p, int target, double floor) {
  nn::Vec<Scalar> d = nn::Vec<Scalar>::Zero(p.size());
  if (static_cast<double>(p(target)) > floor) d(target) = Scalar(-1) / p(target);
  return d;
}

template <typename Scalar>
nn::Vec<Scalar> kl_uniform_grad(const nn::Vec<Scalar>& p, double floor) {
  const Scalar inv_m = Scalar(1) / static_cast<Scalar>(p.size());
  nn::Vec<Scalar> d(p.size());
  for (Index i = 0; i < p.size(); ++i)
    d(i) = static_cast<double>(p(i)) > floor ? -inv_m / p(i) : Scalar(0);
  return d;
}

template <typename Scalar>
nn::Vec<Scalar> concat(const nn::Vec<Scalar>& a, const nn::Vec<Scalar>& b) {
  nn::Vec<Scalar> out(a.size() + b.size());
  out << a, b;
  return out;
}

template <typename Scalar>
void init_params(DisAEParams<Scalar>& p, const DisAEConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index V = c.vocab_size, E = c.embedding_dim, H = c.hidden_dim, A = c.hidden_dim;
  const Index de = c.sentiment_dim, dc = c.content_dim, M = c.num_classes, dz = de + dc;
  auto mk = [&](Index r, Index cols, double limit) {
    nn::Mat<Scalar> m(r, cols);
    nn::fill_uniform<Scalar>(m, static_cast<Scalar>(limit), rng);
    return m;
  };
  auto lstm = [&](Index in) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(H));
    nn::LstmWeights<Scalar> w{mk(4 * H, in, lim), mk(4 * H, H, lim), nn::Mat<Scalar>::Zero(4 * H, 1)};
    w.bias.block(H, 0, H, 1).setOnes();  // forget gate
    return w;
  };
  auto head = [&](Index d) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(2 * H));
    return AttentionHead<Scalar>{mk(A, 2 * H, lim), nn::Mat<Scalar>::Zero(A, 1),
                                 mk(A, 1, 1.0 / std::sqrt(static_cast<double>(A))),
                                 mk(d, 2 * H, lim), nn::Mat<Scalar>::Zero(d, 1)};
  };
  p.embedding = mk(E, V, 1.0);
  p.enc_fwd = lstm(E);
  p.enc_bwd = lstm(E);
  p.sentiment_head = head(de);
  p.content_head = head(dc);
  if (dc != de) {
    p.adapter = mk(de, dc, 1.0 / std::sqrt(static_cast<double>(dc)));
    p.adapter_bias = nn::Mat<Scalar>::Zero(de, 1);
  } else {
    p.adapter.resize(0, 0);
    p.adapter_bias.resize(0, 0);
  }
  p.cls_w = mk(M, de, 1.0 / std::sqrt(static_cast<double>(de)));
  p.cls_b = nn::Mat<Scalar>::Zero(M, 1);
  p.label_table = mk(de, M, 0.5);
  p.init_w = mk(H, dz, 1.0 / std::sqrt(static_cast<double>(dz)));
  p.init_b = nn::Mat<Scalar>::Zero(H, 1);
  p.dec = lstm(E);
  p.dec_z = mk(4 * H, dz, 1.0 / std::sqrt(static_cast<double>(dz)));
  p.out_w = mk(V, H, 1.0 / std::sqrt(static_cast<double>(H)));
  p.out_b = nn::Mat<Scalar>::Zero(V, 1);
}

template <typename Scalar>
void check_shapes(const DisAEParams<Scalar>& p, const DisAEConfig& c) {
  auto expect = [](const nn::Mat<Scalar>& m, Index r, Index cols, const char* name) {
    if (m.rows() != r || m.cols() != cols)
      throw ModelError(std::string("parameter ") + name + " has wrong shape");
  };
  const Index V = c.vocab_size, E = c.embedding_dim, H = c.hidden_dim;
  const Index de = c.sentiment_dim, dc = c.content_dim, M = c.num_classes, dz = de + dc;
  expect(p.embedding, E, V, "embedding");
  for (const auto* w : {&p.enc_fwd, &p.enc_bwd, &p.dec}) {
    expect(w->w_x, 4 * H, E, "lstm.w_x");
    expect(w->w_h, 4 * H, H, "lstm.w_h");
    expect(w->bias, 4 * H, 1, "lstm.bias");
  }
  for (auto [h, d] : {std::pair{&p.sentiment_head, de}, std::pair{&p.content_head, dc}}) {
    expect(h->key, H, 2 * H, "attention.key");
    expect(h->key_bias, H, 1, "attention.key_bias");
    expect(h->query, H, 1, "attention.query");
    expect(h->proj, d, 2 * H, "attention.proj");
    expect(h->proj_bias, d, 1, "attention.proj_bias");
  }
  if (dc != de) {
    expect(p.adapter, de, dc, "classifier.adapter");
    expect(p.adapter_bias, de, 1, "classifier.adapter_bias");
  } else if (p.adapter.size() != 0 || p.adapter_bias.size() != 0) {
    throw ModelError("adapter must be empty when content_dim == sentiment_dim");
  }
  expect(p.cls_w, M, de, "classifier.w");
  expect(p.cls_b, M, 1, "classifier.b");
  expect(p.label_table, de, M, "label_table");
  expect(p.init_w, H, dz, "decoder.init_w");
  expect(p.init_b, H, 1, "decoder.init_b");
  expect(p.dec_z, 4 * H, dz, "decoder.z");
  expect(p.out_w, V, H, "decoder.out_w");
  expect(p.out_b, V, 1, "decoder.out_b");
}

}  // namespace

template <typename Scalar>
double kl_uniform(const nn::Vec<Scalar>& p, double floor) {
  const double inv_m = 1.0 / static_cast<double>(p.size());
  double kl = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    kl += inv_m * (std::log(inv_m) - std::log(std::max(static_cast<double>(p(i)), floor)));
  return kl;
}

template <typename Scalar>
double cross_entropy(const nn::Vec<Scalar>& p, int target, double floor) {
  return -std::log(std::max(static_cast<double>(p(target)), floor));
}

template <typename Scalar>
DisAEModel<Scalar>::DisAEModel(const DisAEConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  init_params(params_, config_, seed);
}

template <typename Scalar>
DisAEModel<Scalar>::DisAEModel(const DisAEConfig& config, DisAEParams<Scalar> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  check_shapes(params_, config_);
}

template <typename Scalar>
EncoderOutput<Scalar> DisAEModel<Scalar>::encode(std::span<const int> ids) const {
  if (static_cast<int>(ids.size()) > config_.max_encode_length)
    throw ModelError("input longer than max_encode_length");
  auto tr = encode_forward(params_, ids);
  EncoderOutput<Scalar> out;
  out.h = tr.states.rowwise().mean();
  out.sentiment_attention = tr.sentiment.alpha;
  out.content_attention = tr.content.alpha;
  out.factors.z_e = tr.sentiment.z;
  out.factors.z_c = tr.content.z;
  out.factors.y_hat = classify(out.factors.z_e);
  out.factors.z_tilde = soft_replace(out.factors.y_hat);
  out.token_states = std::move(tr.states);
  return out;
}

template <typename Scalar>
nn::Vec<Scalar> DisAEModel<Scalar>::classify(const Vec& v) const {
  return classify_forward(params_, v).probs;
}

template <typename Scalar>
nn::Vec<Scalar> DisAEModel<Scalar>::classify_logits(const Vec& v) const {
  auto tr = classify_forward(params_, v);
  return params_.cls_w * tr.input + params_.cls_b.col(0);
}

template <typename Scalar>
nn::Vec<Scalar> DisAEModel<Scalar>::soft_replace(const Vec& y_hat) const {
  return params_.label_table * y_hat;
}

template <typename Scalar>
nn::Mat<Scalar> DisAEModel<Scalar>::decode_teacher_forced(const Vec& z,
                                                          std::span<const int> gold) const {
  if (static_cast<int>(gold.size()) > config_.max_decode_length + 2)
    throw ModelError("gold sequence longer than max_decode_length");
  if (gold.size() < 2 || gold.front() != Vocabulary::kBos || gold.back() != Vocabulary::kEos)
    throw ModelError("gold must start with BOS and end with EOS");
  return decode_forward(params_, z, gold).log_probs.transpose();
}

template <typename Scalar>
typename DisAEModel<Scalar>::DecoderState DisAEModel<Scalar>::decoder_start(const Vec& z) const {
  DecoderState s;
  s.h = (params_.init_w * z + params_.init_b.col(0)).array().tanh().matrix();
  s.c = Vec::Zero(s.h.size());
  s.base = params_.dec_z * z + params_.dec.bias.col(0);
  return s;
}

template <typename Scalar>
nn::Vec<Scalar> DisAEModel<Scalar>::decoder_step(DecoderState& state, int token) const {
  Vec pre = state.base;
  pre.noalias() += params_.dec.w_x * params_.embedding.col(token);
  Vec h, c;
  nn::lstm_step<Scalar>(params_.dec, std::move(pre), state.h, state.c, h, c);
  state.h = std::move(h);
  state.c = std::move(c);
  return nn::log_softmax(params_.out_w * state.h + params_.out_b.col(0));
}

template <typename Scalar>
std::vector<int> DisAEModel<Scalar>::decode_beam(const Vec& z, int beam_width,
                                                 int max_length) const {
  if (beam_width < 1) throw ModelError("beam width must be >= 1");
  struct Hyp {
    std::vector<int> tokens;
    DecoderState state;
    double logp = 0.0;
  };
  struct Cand {
    double score;
    std::size_t hyp;
    int token;
  };
  const int V = config_.vocab_size;
  std::vector<Hyp> live{Hyp{{}, decoder_start(z), 0.0}};
  std::vector<std::pair<double, std::vector<int>>> finished;
  const auto width = static_cast<std::size_t>(beam_width);
  for (int step = 0; step < max_length && !live.empty(); ++step) {
    std::vector<Cand> cands;
    std::vector<DecoderState> next_states(live.size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      next_states[b] = live[b].state;
      const int prev = live[b].tokens.empty() ? Vocabulary::kBos : live[b].tokens.back();
      Vec lp = decoder_step(next_states[b], prev);
      std::vector<int> order(V);
      std::iota(order.begin(), order.end(), 0);
      auto allowed = [](int t) { return t != Vocabulary::kPad && t != Vocabulary::kBos; };
      order.erase(std::remove_if(order.begin(), order.end(), [&](int t) { return !allowed(t); }),
                  order.end());
      const std::size_t k = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int c) {
        return lp(a) != lp(c) ? lp(a) > lp(c) : a < c;
      });
      for (std::size_t i = 0; i < k; ++i)
        cands.push_back({live[b].logp + static_cast<double>(lp(order[i])), b, order[i]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.score > b.score; });
    if (cands.size() > width) cands.resize(width);
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      std::vector<int> tokens = live[c.hyp].tokens;
      if (c.token == Vocabulary::kEos) {
        finished.emplace_back(c.score / static_cast<double>(tokens.size() + 1), std::move(tokens));
      } else {
        tokens.push_back(c.token);
        next.push_back(Hyp{std::move(tokens), next_states[c.hyp], c.score});
      }
    }
    live = std::move(next);
    if (finished.size() >= width) break;
  }
  if (finished.empty()) {
    for (auto& h : live)
      finished.emplace_back(h.logp / static_cast<double>(std::max<std::size_t>(1, h.tokens.size())),
                            h.tokens);
  }
  if (finished.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (finished[i].first > finished[best].first) best = i;
  return finished[best].second;
}

template <typename Scalar>
LossBreakdown DisAEModel<Scalar>::pair_loss(const PairIds& pair, const LossWeights& w,
                                            DisAEParams<Scalar>* grad) const {
  const auto& p = params_;
  const double floor = config_.prob_floor;
  const int M = config_.num_classes;
  const Index de = config_.sentiment_dim;

  auto tp = encode_forward(p, pair.positive);
  auto tn = encode_forward(p, pair.negative);
  const Vec& zpe = tp.sentiment.z;
  const Vec& zpc = tp.content.z;
  const Vec& zne = tn.sentiment.z;
  const Vec& znc = tn.content.z;

  auto cpe = classify_forward(p, zpe);
  auto cne = classify_forward(p, zne);
  auto cpc = classify_forward(p, zpc);
  auto cnc = classify_forward(p, znc);
  Vec ztp = p.label_table * cpe.probs;
  Vec ztn = p.label_table * cne.probs;

  auto rec_p = decode_forward(p, concat(ztp, zpc), pair.positive);
  auto rec_n = decode_forward(p, concat(ztn, znc), pair.negative);
  auto cf_p = decode_forward(p, concat(ztp, znc), pair.positive);
  auto cf_n = decode_forward(p, concat(ztn, zpc), pair.negative);

  std::vector<ClassifierTrace<Scalar>> label_traces;
  label_traces.reserve(M);
  double l_r = 0.0;
  for (int i = 0; i < M; ++i) {
    label_traces.push_back(classify_forward(p, Vec(p.label_table.col(i))));
    l_r += cross_entropy<Scalar>(label_traces.back().probs, i, floor);
  }

  if (zpe.norm() == Scalar(0) || zne.norm() == Scalar(0) || zpc.norm() == Scalar(0) ||
      znc.norm() == Scalar(0))
    throw ModelError("zero-norm latent: cosine distance undefined");
  auto cos_e = nn::cosine_with_grad(zpe, zne);
  auto cos_c = nn::cosine_with_grad(zpc, znc);

  LossBreakdown out;
  out.rec = rec_p.nll + rec_n.nll;
  out.counterfactual = cf_p.nll + cf_n.nll;
  out.emotion = cross_entropy<Scalar>(cpe.probs, pair.positive_class, floor) +
                cross_entropy<Scalar>(cne.probs, pair.negative_class, floor);
  out.neutrality = kl_uniform<Scalar>(cpc.probs, floor) + kl_uniform<Scalar>(cnc.probs, floor);
  out.label = l_r;
  out.distance = 2.0 + static_cast<double>(cos_e.value) - static_cast<double>(cos_c.value);
  out.total = out.rec + w.alpha * (out.emotion + out.neutrality + out.label) +
              w.beta * out.distance + w.gamma * out.counterfactual;
  if (!grad) return out;

  const auto alpha = static_cast<Scalar>(w.alpha);
  const auto beta = static_cast<Scalar>(w.beta);
  const auto gamma = static_cast<Scalar>(w.gamma);
  auto split = [de](const Vec& dz, Vec& d_tilde, Vec& d_c) {
    d_tilde += dz.head(de);
    d_c += dz.tail(dz.size() - de);
  };
  Vec d_ztp = Vec::Zero(de), d_ztn = Vec::Zero(de);
  Vec d_zpc = Vec::Zero(zpc.size()), d_znc = Vec::Zero(znc.size());
  split(decode_backward(p, rec_p, Scalar(1), *grad), d_ztp, d_zpc);
  split(decode_backward(p, rec_n, Scalar(1), *grad), d_ztn, d_znc);
  if (gamma != Scalar(0)) {
    split(decode_backward(p, cf_p, gamma, *grad), d_ztp, d_znc);
    split(decode_backward(p, cf_n, gamma, *grad), d_ztn, d_zpc);
  }

  // z~ = Z_r y_hat
  grad->label_table.noalias() += d_ztp * cpe.probs.transpose();
  grad->label_table.noalias() += d_ztn * cne.probs.transpose();
  Vec dp_pe = p.label_table.transpose() * d_ztp;
  Vec dp_ne = p.label_table.transpose() * d_ztn;
  dp_pe += alpha * cross_entropy_grad(cpe.probs, pair.positive_class, floor);
  dp_ne += alpha * cross_entropy_grad(cne.probs, pair.negative_class, floor);
  Vec d_zpe = classify_backward(p, cpe, dp_pe, *grad);
  Vec d_zne = classify_backward(p, cne, dp_ne, *grad);

  if (alpha != Scalar(0)) {
    d_zpc += classify_backward(p, cpc, Vec(alpha * kl_uniform_grad(cpc.probs, floor)), *grad);
    d_znc += classify_backward(p, cnc, Vec(alpha * kl_uniform_grad(cnc.probs, floor)), *grad);
    for (int i = 0; i < M; ++i) {
      Vec dp = alpha * cross_entropy_grad(label_traces[i].probs, i, floor);
      grad->label_table.col(i) += classify_backward(p, label_traces[i], dp, *grad);
    }
  }

  d_zpe += beta * cos_e.da;
  d_zne += beta * cos_e.db;
  d_zpc -= beta * cos_c.da;
  d_znc -= beta * cos_c.db;

  encode_backward(p, tp, d_zpe, d_zpc, *grad);
  encode_backward(p, tn, d_zne, d_znc, *grad);
  return out;
}

template <typename Scalar>
double DisAEModel<Scalar>::sequence_loss(std::span<const int> ids,
                                         DisAEParams<Scalar>* grad) const {
  const auto& p = params_;
  auto tr = encode_forward(p, ids);
  auto ce = classify_forward(p, tr.sentiment.z);
  Vec zt = p.label_table * ce.probs;
  auto dec = decode_forward(p, concat(zt, tr.content.z), ids);
  if (!grad) return dec.nll;
  const Index de = config_.sentiment_dim;
  Vec dz = decode_backward(p, dec, Scalar(1), *grad);
  Vec d_zt = dz.head(de);
  Vec d_zc = dz.tail(dz.size() - de);
  grad->label_table.noalias() += d_zt * ce.probs.transpose();
  Vec d_ze = classify_backward(p, ce, Vec(p.label_table.transpose() * d_zt), *grad);
  encode_backward(p, tr, d_ze, d_zc, *grad);
  return dec.nll;
}

template <typename Scalar>
double loss_reconstruction(const DisAEModel<Scalar>& model, const PairIds& pair) {
  return model.pair_loss(pair, {}).rec;
}

template <typename Scalar>
double loss_emotion(const DisAEModel<Scalar>& model, const PairIds& pair) {
  auto b = model.pair_loss(pair, {});
  return b.emotion + b.label;
}

template <typename Scalar>
double loss_neutrality(const DisAEModel<Scalar>& model, const PairIds& pair) {
  return model.pair_loss(pair, {}).neutrality;
}

template <typename Scalar>
double loss_counterfactual(const DisAEModel<Scalar>& model, const PairIds& pair) {
  return model.pair_loss(pair, {}).counterfactual;
}

template <typename Scalar>
LossBreakdown loss_total(const DisAEModel<Scalar>& model, const PairIds& pair, double alpha,
                         double beta, double gamma) {
  if (alpha < 0 || beta < 0 || gamma < 0) throw ModelError("loss weights must be >= 0");
  return model.pair_loss(pair, {alpha, beta, gamma});
}

template <typename Scalar>
double loss_distance(const LatentFactors<Scalar>& positive, const LatentFactors<Scalar>& negative) {
  for (const auto* v : {&positive.z_e, &negative.z_e, &positive.z_c, &negative.z_c})
    if (v->norm() == Scalar(0)) throw ModelError("zero-norm latent: cosine distance undefined");
  auto cos = [](const nn::Vec<Scalar>& a, const nn::Vec<Scalar>& b) {
    return static_cast<double>(a.dot(b)) / (static_cast<double>(a.norm()) * b.norm());
  };
  return 2.0 + cos(positive.z_e, negative.z_e) - cos(positive.z_c, negative.z_c);
}

#define CFAUG_INSTANTIATE(S)                                                              \
  template struct DisAEParams<S>;                                                         \
  template struct LatentFactors<S>;                                                       \
  template class DisAEModel<S>;                                                           \
  template double kl_uniform<S>(const nn::Vec<S>&, double);                               \
  template double cross_entropy<S>(const nn::Vec<S>&, int, double);                       \
  template double loss_reconstruction<S>(const DisAEModel<S>&, const PairIds&);           \
  template double loss_emotion<S>(const DisAEModel<S>&, const PairIds&);                  \
  template double loss_neutrality<S>(const DisAEModel<S>&, const PairIds&);               \
  template double loss_counterfactual<S>(const DisAEModel<S>&, const PairIds&);           \
  template LossBreakdown loss_total<S>(const DisAEModel<S>&, const PairIds&, double, double, \
                                       double);                                           \
  template double loss_distance<S>(const LatentFactors<S>&, const LatentFactors<S>&);

CFAUG_INSTANTIATE(float)
CFAUG_INSTANTIATE(double)

#undef CFAUG_INSTANTIATE

}  // namespace cfaug
