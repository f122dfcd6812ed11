#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cfaug/disae.hpp"
#include "test_util.hpp"

using namespace cfaug;
using cfaug::testing::tiny_config;

namespace {

// Makes classify() return softmax(bias) for every input.
template <typename S>
void constant_classifier(DisAEModel<S>& m, const std::vector<double>& probs) {
  auto& p = m.params();
  p.cls_w.setZero();
  for (std::size_t i = 0; i < probs.size(); ++i) p.cls_b(i, 0) = static_cast<S>(std::log(probs[i]));
}

template <typename S>
LatentFactors<S> factors(std::vector<S> e, std::vector<S> c) {
  LatentFactors<S> f;
  f.z_e = Eigen::Map<nn::Vec<S>>(e.data(), e.size());
  f.z_c = Eigen::Map<nn::Vec<S>>(c.data(), c.size());
  return f;
}

}  // namespace

TEST(DisAEConfig, Validation) {
  DisAEConfig c = tiny_config(20);
  EXPECT_NO_THROW(c.validate());
  c.hidden_dim = 0;
  EXPECT_THROW(c.validate(), ModelError);
  c = tiny_config(20);
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ModelError);
  c = tiny_config(2);
  EXPECT_THROW(c.validate(), ModelError);
  EXPECT_EQ(DisAEConfig::from_json(tiny_config(20).to_json()), tiny_config(20));
}

TEST(DisAEModel, EncodeShapesAndAttention) {
  const auto pairs = toy_pairs(4, 1);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<double> m(tiny_config(vocab.size()), 7);
  const auto ids = vocab.encode(pairs[0].positive.text);
  const auto out = m.encode(ids);
  EXPECT_EQ(out.token_states.rows(), 16);
  EXPECT_EQ(out.token_states.cols(), static_cast<Eigen::Index>(ids.size()));
  EXPECT_EQ(out.factors.z_e.size(), 4);
  EXPECT_EQ(out.factors.z_c.size(), 5);
  EXPECT_NEAR(out.sentiment_attention.sum(), 1.0, 1e-12);
  EXPECT_NEAR(out.content_attention.sum(), 1.0, 1e-12);
  EXPECT_NEAR(out.factors.y_hat.sum(), 1.0, 1e-12);
  EXPECT_TRUE(out.factors.z_tilde.isApprox(m.params().label_table * out.factors.y_hat));
  EXPECT_EQ(out.factors.decoder_input().size(), 9);
}

TEST(DisAEModel, ClassifierAcceptsBothLatents) {
  DisAEModel<double> m(tiny_config(20), 3);
  EXPECT_EQ(m.classify(nn::Vec<double>::Ones(4)).size(), 5);
  EXPECT_EQ(m.classify(nn::Vec<double>::Ones(5)).size(), 5);
  EXPECT_THROW(m.classify(nn::Vec<double>::Ones(6)), ModelError);

  // No adapter when the two latents have equal width.
  auto c = tiny_config(20);
  c.content_dim = c.sentiment_dim;
  DisAEModel<double> same(c, 3);
  EXPECT_EQ(same.params().adapter.size(), 0);
}

TEST(DisAEModel, RejectsBadInput) {
  DisAEModel<double> m(tiny_config(20), 3);
  EXPECT_THROW(m.encode(std::vector<int>{}), ModelError);
  EXPECT_THROW(m.encode(std::vector<int>{1, 99, 2}), ModelError);
  const nn::Vec<double> z = nn::Vec<double>::Zero(9);
  EXPECT_THROW(m.decode_teacher_forced(z, std::vector<int>{5, 6}), ModelError);
  EXPECT_THROW(m.decode_beam(z, 0, 5), ModelError);
}

TEST(LossOracles, NeutralityTwoClasses) {
  // KL(U || (0.8, 0.2)) = 0.5 ln(0.5/0.8) + 0.5 ln(0.5/0.2)
  const double expected = 0.5 * std::log(0.5 / 0.8) + 0.5 * std::log(0.5 / 0.2);
  EXPECT_NEAR(expected, 0.2231, 1e-4);
  nn::Vec<double> p(2);
  p << 0.8, 0.2;
  EXPECT_NEAR(kl_uniform(p), expected, 1e-12);

  const auto pairs = toy_pairs(1, 2);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  auto c = tiny_config(vocab.size(), 2);
  DisAEModel<double> m(c, 5);
  constant_classifier(m, {0.8, 0.2});
  // One KL term for each side of the pair.
  EXPECT_NEAR(loss_neutrality(m, make_pair_ids(pairs[0], vocab, c)), 2 * expected, 1e-9);
}

TEST(LossOracles, NeutralityZeroAtUniform) {
  nn::Vec<double> p = nn::Vec<double>::Constant(5, 0.2);
  EXPECT_NEAR(kl_uniform(p), 0.0, 1e-12);
}

TEST(LossOracles, DistanceExtremes) {
  // opposite sentiment latents, identical content latents
  auto a = factors<double>({1, 2}, {3, 1, 2});
  auto b = factors<double>({-1, -2}, {3, 1, 2});
  EXPECT_NEAR(loss_distance(a, b), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(loss_distance(a, a), 2.0);
  auto zero = factors<double>({0, 0}, {1, 1, 1});
  EXPECT_THROW(loss_distance(a, zero), ModelError);
}

TEST(LossOracles, UniformDecoderReconstruction) {
  const auto pairs = toy_pairs(1, 4);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  auto c = tiny_config(vocab.size());
  DisAEModel<double> m(c, 9);
  m.params().out_w.setZero();
  m.params().out_b.setZero();
  const auto ids = vocab.encode(pairs[0].positive.text);
  const double T = static_cast<double>(ids.size() - 1);
  EXPECT_NEAR(m.sequence_loss(ids), T * std::log(static_cast<double>(vocab.size())), 1e-6);

  const auto pid = make_pair_ids(pairs[0], vocab, c);
  const double both = static_cast<double>(pid.positive.size() + pid.negative.size() - 2);
  EXPECT_NEAR(loss_reconstruction(m, pid), both * std::log(static_cast<double>(vocab.size())), 1e-6);
}

TEST(LossOracles, CrossEntropy) {
  nn::Vec<double> p(3);
  p << 0.5, 0.25, 0.25;
  EXPECT_NEAR(cross_entropy(p, 1), std::log(4.0), 1e-12);
  p << 1.0, 0.0, 0.0;
  EXPECT_NEAR(cross_entropy(p, 2, 1e-8), -std::log(1e-8), 1e-9);
}

TEST(LossOracles, TotalIsWeightedSum) {
  const auto pairs = toy_pairs(1, 5);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  auto c = tiny_config(vocab.size());
  DisAEModel<double> m(c, 2);
  const auto pid = make_pair_ids(pairs[0], vocab, c);
  const auto b = loss_total(m, pid, 1.5, 0.5, 0.25);
  EXPECT_NEAR(b.total,
              b.rec + 1.5 * (b.emotion + b.neutrality + b.label) + 0.5 * b.distance +
                  0.25 * b.counterfactual,
              1e-9);
  EXPECT_NEAR(loss_emotion(m, pid), b.emotion + b.label, 1e-12);
  EXPECT_NEAR(loss_counterfactual(m, pid), b.counterfactual, 1e-12);
  EXPECT_THROW(loss_total(m, pid, -1, 0, 0), ModelError);
}

TEST(Gradients, PairLossMatchesFiniteDifferences) {
  const auto pairs = toy_pairs(2, 6);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  auto c = tiny_config(vocab.size());
  DisAEModel<double> m(c, 4);
  const auto pid = make_pair_ids(pairs[0], vocab, c);
  const LossWeights w{1.3, 0.7, 0.9};

  auto grad = m.params().zeros_like();
  m.pair_loss(pid, w, &grad);

  std::vector<nn::Mat<double>*> ps, gs;
  m.params().visit([&](const std::string&, nn::Mat<double>& t) { ps.push_back(&t); });
  grad.visit([&](const std::string&, nn::Mat<double>& t) { gs.push_back(&t); });
  ASSERT_EQ(ps.size(), gs.size());

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& t = *ps[k];
    if (t.size() == 0) continue;
    // Two entries per tensor: the first and the middle one.
    for (Eigen::Index i : {Eigen::Index{0}, t.size() / 2}) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = m.pair_loss(pid, w).total;
      t.data()[i] = saved - h;
      const double down = m.pair_loss(pid, w).total;
      t.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = gs[k]->data()[i];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      worst = std::max(worst, rel);
      EXPECT_LT(rel, 1e-4) << "tensor " << k << " entry " << i;
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradients, SequenceLossMatchesFiniteDifferences) {
  const auto pairs = toy_pairs(1, 8);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<double> m(tiny_config(vocab.size()), 11);
  const auto ids = vocab.encode(pairs[0].negative.text);
  auto grad = m.params().zeros_like();
  m.sequence_loss(ids, &grad);
  std::mt19937_64 rng(3);
  std::vector<nn::Mat<double>*> ps, gs;
  m.params().visit([&](const std::string&, nn::Mat<double>& t) { ps.push_back(&t); });
  grad.visit([&](const std::string&, nn::Mat<double>& t) { gs.push_back(&t); });
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t k = std::uniform_int_distribution<std::size_t>(0, ps.size() - 1)(rng);
    if (ps[k]->size() == 0) continue;
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, ps[k]->size() - 1)(rng);
    double& x = ps[k]->data()[i];
    const double saved = x;
    x = saved + 1e-5;
    const double up = m.sequence_loss(ids);
    x = saved - 1e-5;
    const double down = m.sequence_loss(ids);
    x = saved;
    const double numeric = (up - down) / 2e-5;
    const double analytic = gs[k]->data()[i];
    EXPECT_LT(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-4}), 1e-4);
  }
}

TEST(Decoding, BeamWidthOneIsGreedy) {
  const auto pairs = toy_pairs(1, 3);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<double> m(tiny_config(vocab.size()), 13);
  const nn::Vec<double> z = nn::Vec<double>::Random(9);
  const auto beam = m.decode_beam(z, 1, 12);

  auto state = m.decoder_start(z);
  std::vector<int> greedy;
  int prev = Vocabulary::kBos;
  for (int step = 0; step < 12; ++step) {
    auto lp = m.decoder_step(state, prev);
    lp(Vocabulary::kPad) = lp(Vocabulary::kBos) = -1e300;
    Eigen::Index best;
    lp.maxCoeff(&best);
    if (best == Vocabulary::kEos) break;
    greedy.push_back(static_cast<int>(best));
    prev = static_cast<int>(best);
  }
  EXPECT_EQ(beam, greedy);
  for (int t : beam) EXPECT_GE(t, Vocabulary::kEos + 1);
  EXPECT_LE(beam.size(), 12u);
}

TEST(Decoding, TeacherForcedRowsAreDistributions) {
  const auto pairs = toy_pairs(1, 3);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<float> m(tiny_config(vocab.size()), 13);
  const auto ids = vocab.encode(pairs[0].positive.text);
  const auto lp = m.decode_teacher_forced(nn::Vec<float>::Zero(9), ids);
  ASSERT_EQ(lp.rows(), static_cast<Eigen::Index>(ids.size() - 1));
  for (Eigen::Index r = 0; r < lp.rows(); ++r) EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0f, 1e-4f);
}

TEST(DisAEModel, SeededInitIsDeterministic) {
  DisAEModel<float> a(tiny_config(30), 42), b(tiny_config(30), 42), c(tiny_config(30), 43);
  std::vector<nn::Mat<float>> ta, tb, tc;
  a.params().visit([&](const std::string&, const nn::Mat<float>& t) { ta.push_back(t); });
  b.params().visit([&](const std::string&, const nn::Mat<float>& t) { tb.push_back(t); });
  c.params().visit([&](const std::string&, const nn::Mat<float>& t) { tc.push_back(t); });
  bool differs = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i], tb[i]);
    if (ta[i].size() && ta[i] != tc[i]) differs = true;
  }
  EXPECT_TRUE(differs);
}
