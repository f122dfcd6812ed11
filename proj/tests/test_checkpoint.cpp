#include <cstring>

#include <gtest/gtest.h>

#include "cfaug/checkpoint.hpp"
#include "test_util.hpp"

using namespace cfaug;
using cfaug::testing::read_file;
using cfaug::testing::TempDir;
using cfaug::testing::tiny_config;
using cfaug::testing::write_file;

namespace {

template <typename S>
void expect_identical_forward(const DisAEModel<S>& a, const DisAEModel<S>& b, const Vocabulary& v,
                              const std::vector<CounterfactualPair>& pairs) {
  for (const auto& p : pairs) {
    const auto ids = v.encode(p.positive.text);
    const auto ea = a.encode(ids), eb = b.encode(ids);
    const auto za = ea.factors.decoder_input(), zb = eb.factors.decoder_input();
    ASSERT_EQ(za.size(), zb.size());
    EXPECT_EQ(std::memcmp(za.data(), zb.data(), sizeof(S) * za.size()), 0);
    const auto la = a.decode_teacher_forced(za, ids), lb = b.decode_teacher_forced(zb, ids);
    EXPECT_EQ(std::memcmp(la.data(), lb.data(), sizeof(S) * la.size()), 0);
    EXPECT_EQ(a.decode_beam(za), b.decode_beam(zb));
  }
}

}  // namespace

TEST(Checkpoint, FloatRoundTripIsBitIdentical) {
  TempDir dir("ck");
  const auto pairs = toy_pairs(5, 1);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<float> m(tiny_config(vocab.size()), 3);
  save_checkpoint(dir / "m.ckpt", m, vocab);
  EXPECT_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));
  const auto ck = load_checkpoint<float>(dir / "m.ckpt");
  EXPECT_EQ(ck.vocab, vocab);
  EXPECT_EQ(ck.model.config(), m.config());
  expect_identical_forward(m, ck.model, vocab, pairs);
}

TEST(Checkpoint, DoubleRoundTripIsBitIdentical) {
  TempDir dir("ck");
  const auto pairs = toy_pairs(3, 2);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<double> m(tiny_config(vocab.size()), 4);
  save_checkpoint(dir / "m.ckpt", m, vocab);
  expect_identical_forward(m, load_checkpoint<double>(dir / "m.ckpt").model, vocab, pairs);
}

TEST(Checkpoint, SavingTwiceGivesSameBytes) {
  TempDir dir("ck");
  const auto pairs = toy_pairs(3, 2);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<float> m(tiny_config(vocab.size()), 4);
  save_checkpoint(dir / "a.ckpt", m, vocab);
  save_checkpoint(dir / "b.ckpt", load_checkpoint<float>(dir / "a.ckpt").model, vocab);
  EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));
  EXPECT_EQ(read_file(dir / "a.ckpt").substr(0, 8), "CFAUGCK1");
}

TEST(Checkpoint, CorruptionIsDetected) {
  TempDir dir("ck");
  const auto pairs = toy_pairs(3, 2);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<float> m(tiny_config(vocab.size()), 4);
  save_checkpoint(dir / "m.ckpt", m, vocab);
  const std::string good = read_file(dir / "m.ckpt");

  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x20;
  write_file(dir / "flip.ckpt", flipped);
  EXPECT_THROW(load_checkpoint<float>(dir / "flip.ckpt"), CheckpointError);

  write_file(dir / "short.ckpt", good.substr(0, good.size() - 100));
  EXPECT_THROW(load_checkpoint<float>(dir / "short.ckpt"), CheckpointError);

  write_file(dir / "magic.ckpt", "NOTACKPT" + good.substr(8));
  EXPECT_THROW(load_checkpoint<float>(dir / "magic.ckpt"), CheckpointError);

  write_file(dir / "empty.ckpt", "");
  EXPECT_THROW(load_checkpoint<float>(dir / "empty.ckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>(dir / "absent.ckpt"), CheckpointError);
}

TEST(Checkpoint, VocabularyMismatchRefusedOnSave) {
  TempDir dir("ck");
  DisAEModel<float> m(tiny_config(30), 4);
  const auto vocab = build_vocab(std::vector<std::string>{"a b c"}, 1);
  EXPECT_THROW(save_checkpoint(dir / "m.ckpt", m, vocab), CheckpointError);
  EXPECT_FALSE(std::filesystem::exists(dir / "m.ckpt"));
}

TEST(Checkpoint, LoadsAcrossScalarTypes) {
  TempDir dir("ck");
  const auto pairs = toy_pairs(3, 2);
  const auto vocab = cfaug::testing::toy_vocab(pairs);
  DisAEModel<float> m(tiny_config(vocab.size()), 4);
  save_checkpoint(dir / "m.ckpt", m, vocab);
  const auto d = load_checkpoint<double>(dir / "m.ckpt");
  EXPECT_EQ(d.model.params().out_w.cast<float>(), m.params().out_w);
}
