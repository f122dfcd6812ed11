#pragma once

// Disentangled autoencoder over counterfactual review pairs.
//
// A bidirectional LSTM encodes a review into per-token states. Two attention
// pooling heads read those states and project them to a sentiment latent z_e
// and a content latent z_c. A shared linear classifier C scores z_e, z_c
// (through an adapter when the dimensions differ) and the rows of a learnable
// label-embedding table Z_r. The sentiment latent used for decoding is the
// soft replacement  z~_e = sum_i p(i | z_e) Z_r[i]. An LSTM decoder conditioned
// on [z~_e ; z_c] reconstructs text.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfaug/corpus.hpp"
#include "cfaug/nn.hpp"

namespace cfaug {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

struct DisAEConfig {
  int vocab_size = 0;
  int embedding_dim = 128;
  int hidden_dim = 512;
  int sentiment_dim = 64;  // d_e
  int content_dim = 256;   // d_c
  int num_classes = 5;     // M
  int max_decode_length = 70;
  int beam_width = 4;
  int max_encode_length = 128;
  double prob_floor = 1e-8;

  int latent_dim() const { return sentiment_dim + content_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static DisAEConfig from_json(const nlohmann::json& j);
  bool operator==(const DisAEConfig&) const = default;
};

template <typename Scalar>
struct AttentionHead {
  nn::Mat<Scalar> key;        // A x 2H
  nn::Mat<Scalar> key_bias;   // A x 1
  nn::Mat<Scalar> query;      // A x 1
  nn::Mat<Scalar> proj;       // d x 2H
  nn::Mat<Scalar> proj_bias;  // d x 1
};

/// Every trainable tensor of the model. visit() enumerates them in a fixed
/// order with stable names; checkpoints and optimizers rely on that order.
template <typename Scalar>
struct DisAEParams {
  nn::Mat<Scalar> embedding;  // E x V, one column per token
  nn::LstmWeights<Scalar> enc_fwd;
  nn::LstmWeights<Scalar> enc_bwd;
  AttentionHead<Scalar> sentiment_head;
  AttentionHead<Scalar> content_head;
  nn::Mat<Scalar> adapter;       // d_e x d_c, empty when d_c == d_e
  nn::Mat<Scalar> adapter_bias;  // d_e x 1, empty when d_c == d_e
  nn::Mat<Scalar> cls_w;         // M x d_e
  nn::Mat<Scalar> cls_b;         // M x 1
  nn::Mat<Scalar> label_table;   // d_e x M, column i is Z_r[i]
  nn::Mat<Scalar> init_w;        // H x (d_e + d_c)
  nn::Mat<Scalar> init_b;        // H x 1
  nn::LstmWeights<Scalar> dec;
  nn::Mat<Scalar> dec_z;         // 4H x (d_e + d_c)
  nn::Mat<Scalar> out_w;         // V x H
  nn::Mat<Scalar> out_b;         // V x 1

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Same shapes, all zeros.
  DisAEParams zeros_like() const;
  std::size_t num_scalars() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    auto lstm = [&f](std::string_view prefix, auto& w) {
      f(std::string(prefix) + ".w_x", w.w_x);
      f(std::string(prefix) + ".w_h", w.w_h);
      f(std::string(prefix) + ".bias", w.bias);
    };
    auto head = [&f](std::string_view prefix, auto& h) {
      f(std::string(prefix) + ".key", h.key);
      f(std::string(prefix) + ".key_bias", h.key_bias);
      f(std::string(prefix) + ".query", h.query);
      f(std::string(prefix) + ".proj", h.proj);
      f(std::string(prefix) + ".proj_bias", h.proj_bias);
    };
    f(std::string("embedding"), p.embedding);
    lstm("encoder.fwd", p.enc_fwd);
    lstm("encoder.bwd", p.enc_bwd);
    head("attention.sentiment", p.sentiment_head);
    head("attention.content", p.content_head);
    f(std::string("classifier.adapter"), p.adapter);
    f(std::string("classifier.adapter_bias"), p.adapter_bias);
    f(std::string("classifier.w"), p.cls_w);
    f(std::string("classifier.b"), p.cls_b);
    f(std::string("label_table"), p.label_table);
    f(std::string("decoder.init_w"), p.init_w);
    f(std::string("decoder.init_b"), p.init_b);
    lstm("decoder.lstm", p.dec);
    f(std::string("decoder.z"), p.dec_z);
    f(std::string("decoder.out_w"), p.out_w);
    f(std::string("decoder.out_b"), p.out_b);
  }
};

template <typename Scalar>
struct LatentFactors {
  nn::Vec<Scalar> z_e;
  nn::Vec<Scalar> z_c;
  nn::Vec<Scalar> z_tilde;  // soft-replaced sentiment latent
  nn::Vec<Scalar> y_hat;    // classify(z_e)

  /// [z~_e ; z_c], the decoder conditioning vector.
  nn::Vec<Scalar> decoder_input() const;
};

template <typename Scalar>
struct EncoderOutput {
  nn::Mat<Scalar> token_states;  // 2H x T
  nn::Vec<Scalar> h;             // mean-pooled token states
  nn::Vec<Scalar> sentiment_attention;
  nn::Vec<Scalar> content_attention;
  LatentFactors<Scalar> factors;
};

/// A tokenized pair together with its sentiment class targets.
struct PairIds {
  std::vector<int> positive;
  std::vector<int> negative;
  int positive_class = 0;
  int negative_class = 0;
};

PairIds make_pair_ids(const CounterfactualPair& pair, const Vocabulary& vocab,
                      const DisAEConfig& config);

struct LossWeights {
  double alpha = 0.0;  // emotion group: L_e + L_n + L_r
  double beta = 0.0;   // L_dis
  double gamma = 0.0;  // L_cf
};

struct LossBreakdown {
  double rec = 0.0;
  double emotion = 0.0;     // L_e
  double neutrality = 0.0;  // L_n
  double label = 0.0;       // L_r
  double distance = 0.0;    // L_dis
  double counterfactual = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown& operator*=(double s);
};

template <typename Scalar>
class DisAEModel {
 public:
  using Vec = nn::Vec<Scalar>;
  using Mat = nn::Mat<Scalar>;

  DisAEModel() = default;
  DisAEModel(const DisAEConfig& config, std::uint64_t seed);
  DisAEModel(const DisAEConfig& config, DisAEParams<Scalar> params);

  const DisAEConfig& config() const { return config_; }
  const DisAEParams<Scalar>& params() const { return params_; }
  DisAEParams<Scalar>& params() { return params_; }

  EncoderOutput<Scalar> encode(std::span<const int> ids) const;

  /// Softmax over M classes. Accepts a d_e vector, or a d_c vector which is
  /// routed through the adapter first.
  Vec classify(const Vec& v) const;
  Vec classify_logits(const Vec& v) const;
  Vec soft_replace(const Vec& y_hat) const;

  /// Log-probabilities, one row per predicted step (gold.size() - 1 rows).
  Mat decode_teacher_forced(const Vec& z, std::span<const int> gold) const;
  /// Length-normalized beam search. Returns generated ids without BOS/EOS.
  std::vector<int> decode_beam(const Vec& z, int beam_width, int max_length) const;
  std::vector<int> decode_beam(const Vec& z) const {
    return decode_beam(z, config_.beam_width, config_.max_decode_length);
  }

  /// Incremental decoding, exposed for custom search procedures.
  struct DecoderState {
    Vec h;
    Vec c;
    Vec base;  // constant pre-activation: bias + W_z z
  };
  DecoderState decoder_start(const Vec& z) const;
  /// Feeds `token` and returns log p(next | ...), advancing the state.
  Vec decoder_step(DecoderState& state, int token) const;

  /// Full objective on one pair; accumulates parameter gradients into `grad`
  /// when non-null.
  LossBreakdown pair_loss(const PairIds& pair, const LossWeights& w,
                          DisAEParams<Scalar>* grad = nullptr) const;
  /// Plain autoencoder objective on a single sequence.
  double sequence_loss(std::span<const int> ids, DisAEParams<Scalar>* grad = nullptr) const;

 private:
  DisAEConfig config_;
  DisAEParams<Scalar> params_;
};

// Individual objective terms on a tokenized pair (see pair_loss for the sum).
template <typename Scalar>
double loss_reconstruction(const DisAEModel<Scalar>& model, const PairIds& pair);
template <typename Scalar>
double loss_emotion(const DisAEModel<Scalar>& model, const PairIds& pair);  // L_e + L_r
template <typename Scalar>
double loss_neutrality(const DisAEModel<Scalar>& model, const PairIds& pair);
template <typename Scalar>
double loss_counterfactual(const DisAEModel<Scalar>& model, const PairIds& pair);
template <typename Scalar>
LossBreakdown loss_total(const DisAEModel<Scalar>& model, const PairIds& pair, double alpha,
                         double beta, double gamma);

/// 2 + cos(z_e^p, z_e^n) - cos(z_c^p, z_c^n). Throws on zero-norm latents.
template <typename Scalar>
double loss_distance(const LatentFactors<Scalar>& positive, const LatentFactors<Scalar>& negative);

/// KL(U || p) with probabilities floored at `floor`.
template <typename Scalar>
double kl_uniform(const nn::Vec<Scalar>& p, double floor = 1e-8);
template <typename Scalar>
double cross_entropy(const nn::Vec<Scalar>& p, int target, double floor = 1e-8);

template <typename Scalar>
inline EncoderOutput<Scalar> encode(const DisAEModel<Scalar>& model, std::span<const int> ids) {
  return model.encode(ids);
}

template <typename Scalar>
inline nn::Vec<Scalar> soft_replace(const nn::Vec<Scalar>& y_hat,
                                    const nn::Mat<Scalar>& label_table) {
  return label_table * y_hat;
}

}  // namespace cfaug
