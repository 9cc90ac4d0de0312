#include <cmath>

#include <gtest/gtest.h>

#include "belm_test_util.hpp"
#include "csfusion/belm.hpp"
#include "test_util.hpp"

namespace csfusion::belm {
namespace {

using L = Language;

TEST(BuildInput, Examples) {
  const Vocab v = testing::example_vocab();
  const auto in = build_input({v.id("你"), Vocab::kUnk}, {Vocab::kUnk, v.id("_hi")}, v, 96);
  EXPECT_EQ(in.tokens, (std::vector<TokenId>{v.id("你"), Vocab::kUnk, Vocab::kBlank,
                                             Vocab::kUnk, v.id("_hi")}));
  EXPECT_EQ(in.blank_pos, 2u);
  const auto empty = build_input({}, {}, v, 96);
  EXPECT_EQ(empty.tokens, std::vector<TokenId>{Vocab::kBlank});
  try {
    build_input({v.id("_hi")}, {}, v, 96);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPurityViolation);
  }
  EXPECT_THROW(build_input({}, {v.id("你")}, v, 96), Error);
  EXPECT_THROW(build_input({Vocab::kBlank}, {}, v, 96), Error);
  try {
    build_input({v.id("你"), v.id("好")}, {v.id("_hi")}, v, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooLong);
  }
  EXPECT_EQ(build_input({v.id("你"), v.id("好")}, {}, v, 3).size(), 3u);
}

TEST(Config, ValidationJsonAndScale) {
  BelmConfig c;
  EXPECT_NO_THROW(c.validate());
  const BelmConfig p = BelmConfig::full_scale();
  EXPECT_EQ(p.enc_layers, 4);
  EXPECT_EQ(p.dec_layers, 2);
  EXPECT_EQ(p.d_model, 256);
  EXPECT_EQ(p.heads, 4);
  EXPECT_EQ(p.d_ff, 1024);
  EXPECT_DOUBLE_EQ(p.label_smoothing, 0.1);
  EXPECT_DOUBLE_EQ(p.peak_lr, 1e-3);
  EXPECT_DOUBLE_EQ(p.grad_clip, 5.0);
  EXPECT_EQ(nlohmann::json(p).get<BelmConfig>(), p);
  for (auto mutate : std::vector<void (*)(BelmConfig&)>{
           [](BelmConfig& x) { x.heads = 3; }, [](BelmConfig& x) { x.dropout = 1.0; },
           [](BelmConfig& x) { x.enc_layers = 0; }, [](BelmConfig& x) { x.peak_lr = 0; },
           [](BelmConfig& x) { x.label_smoothing = -0.1; }}) {
    BelmConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_THROW(BelmModel<float>(bad, 10), Error);
  }
}

TEST(Model, ParameterShapesFollowConfig) {
  const BelmConfig c = testing::tiny_config();
  const BelmModel<double> m(c, 20);
  std::size_t count = 0;
  m.visit([&](const std::string& name, const Param<double>& p) {
    if (name == "embedding") {
      EXPECT_EQ(p.value.rows(), 20);
      EXPECT_EQ(p.value.cols(), 8);
    }
    if (name == "output.w") {
      EXPECT_EQ(p.value.rows(), 8);
      EXPECT_EQ(p.value.cols(), 20);
    }
    EXPECT_TRUE(p.value.allFinite()) << name;
    ++count;
  });
  EXPECT_GT(count, 10u);
  // d(V) embedding + output (dV + V) + per-layer blocks.
  const std::size_t d = 8, f = 12, V = 20;
  const std::size_t attn = 4 * (d * d + d), ff = d * f + f + f * d + d, ln = 2 * d;
  const std::size_t expected = V * d + (attn + ff + 2 * ln) + ln + (2 * attn + ff + 3 * ln) + ln +
                               d * V + V;
  EXPECT_EQ(m.parameter_count(), expected);
}

TEST(Model, EvalForwardIsDeterministicAndNormalized) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  const BelmModel<double> m(BelmConfig{}, v.size());
  const auto in = build_input({4, 5, Vocab::kUnk}, {Vocab::kUnk, Vocab::kUnk, 11}, v, 96);
  const std::vector<TokenId> prefix{Vocab::kSos, 4, 5};
  const auto a = m.forward(in, prefix);
  const auto b = m.forward(in, prefix);
  ASSERT_EQ(a.rows(), 3);
  ASSERT_EQ(a.cols(), static_cast<Eigen::Index>(v.size()));
  EXPECT_TRUE(a == b);
  Mat<double> probs = a;
  softmax_rows(probs);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) EXPECT_NEAR(probs.row(r).sum(), 1.0, 1e-6);
  EXPECT_THROW(m.forward(in, {4}), Error);
  EXPECT_THROW(m.forward(in, {Vocab::kSos, 999}), Error);
}

TEST(Model, CausalMasking) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  BelmConfig c;
  c.dec_layers = 2;
  const BelmModel<double> m(c, v.size());
  const auto in = build_input({4, 5}, {11, Vocab::kUnk}, v, 96);
  const auto a = m.forward(in, {Vocab::kSos, 4, 6, 7, 8});
  const auto b = m.forward(in, {Vocab::kSos, 4, 6, 9, 10});
  // Rows 0..2 see only positions 0..2, which agree.
  EXPECT_TRUE(a.topRows(3) == b.topRows(3));
  EXPECT_FALSE(a.row(3) == b.row(3));
}

TEST(Model, SourceChangesReachEveryRow) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  const BelmModel<double> m(BelmConfig{}, v.size());
  const auto a = m.forward(build_input({4, 5}, {11}, v, 96), {Vocab::kSos, 4});
  const auto b = m.forward(build_input({4, 6}, {11}, v, 96), {Vocab::kSos, 4});
  for (Eigen::Index r = 0; r < 2; ++r) EXPECT_FALSE(a.row(r) == b.row(r));
}

TEST(Model, UniformLogitsGiveLogVocabLoss) {
  const Vocab v = synthetic_vocab(10, 6, 1);
  BelmConfig c;
  c.label_smoothing = 0.0;
  BelmModel<double> m(c, v.size());
  testing::scale_output(m, 0.0);
  const auto in = build_input({4, 5}, {14}, v, 96);
  EXPECT_NEAR(m.loss(in, {4, 5, 14}), std::log(static_cast<double>(v.size())), 1e-6);
  c.label_smoothing = 0.1;
  BelmModel<double> smoothed(c, v.size());
  testing::scale_output(smoothed, 0.0);
  // Smoothing mixes in the uniform distribution, which costs the same log|V|.
  EXPECT_NEAR(smoothed.loss(in, {4}), std::log(static_cast<double>(v.size())), 1e-6);
}

TEST(Model, SmoothedCrossEntropyMatchesDefinition) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  const BelmModel<double> m(BelmConfig{}, v.size());
  Mat<double> logits(2, static_cast<Eigen::Index>(v.size()));
  Rng rng(9);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  const std::vector<TokenId> gold{4, 7};
  Mat<double> grad;
  const double got = m.smoothed_cross_entropy(logits, gold, &grad);
  const double eps = 0.1, V = static_cast<double>(v.size());
  double expected = 0;
  for (Eigen::Index r = 0; r < 2; ++r) {
    const double lse = std::log(logits.row(r).array().exp().sum());
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double q = (k == gold[static_cast<std::size_t>(r)] ? 1 - eps : 0) + eps / V;
      expected -= q * (logits(r, k) - lse);
    }
  }
  EXPECT_NEAR(got, expected / 2, 1e-12);
  for (Eigen::Index r = 0; r < 2; ++r) EXPECT_NEAR(grad.row(r).sum(), 0.0, 1e-12);
}

TEST(Model, IncrementalStepMatchesForward) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  for (auto scheme : {PositionScheme::kSegment, PositionScheme::kAbsolute}) {
    BelmConfig c;
    c.dec_layers = 2;
    c.positions = scheme;
    const BelmModel<double> m(c, v.size());
    const auto in = build_input({4, Vocab::kUnk, 6}, {Vocab::kUnk, 12}, v, 96);
    const std::vector<TokenId> prefix{Vocab::kSos, 4, 12, 6, Vocab::kUnk};
    Mat<double> full = m.forward(in, prefix);
    const auto enc = m.encode_source(in);
    auto state = m.initial_state();
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      const auto row = m.step(enc, state, prefix[i]);
      const auto r = static_cast<Eigen::Index>(i);
      const double lse = std::log(full.row(r).array().exp().sum());
      for (Eigen::Index k = 0; k < row.size(); ++k) {
        EXPECT_NEAR(row(k), full(r, k) - lse, 1e-10);
      }
    }
  }
}

TEST(Model, PackedBatchMatchesSingleSequences) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  BelmModel<double> m(testing::tiny_config(), v.size());
  const auto in1 = build_input({4, 5}, {Vocab::kUnk}, v, 16);
  const auto in2 = build_input({Vocab::kUnk}, {11, 12, 13}, v, 16);
  const Utterance t1{4, 5, 11}, t2{12};
  const double l1 = m.loss(in1, t1), l2 = m.loss(in2, t2);
  const auto batch = pack_training({{&in1, &t1}, {&in2, &t2}}, m.config().positions);
  // Batch loss averages over the 4 + 2 target rows.
  EXPECT_NEAR(m.loss_and_grad(batch, DropoutContext{}), (4 * l1 + 2 * l2) / 6, 1e-12);
}

TEST(Model, LengthLimits) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  BelmConfig c = testing::tiny_config();
  c.max_len = 4;
  const BelmModel<double> m(c, v.size());
  const BelmInput in{{4, 5, 6, Vocab::kBlank, 11}, 3};
  try {
    m.loss(in, {4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooLong);
  }
  const BelmInput ok{{4, Vocab::kBlank}, 1};
  EXPECT_NO_THROW(m.loss(ok, {4, 5, 6}));
  EXPECT_THROW(m.loss(ok, {4, 5, 6, 7}), Error);
}

TEST(Model, GradientMatchesFiniteDifferences) {
  const Vocab v = synthetic_vocab(6, 4, 1);
  BelmModel<double> m(testing::tiny_config(), v.size());
  const auto in = build_input({4, 5, Vocab::kUnk}, {Vocab::kUnk, Vocab::kUnk, 11}, v, 16);
  const Utterance target{4, 5, 11};
  const auto batch = pack_training({{&in, &target}}, m.config().positions);
  m.loss_and_grad(batch, DropoutContext{});
  auto params = m.parameters();
  Rng rng(21);
  for (int k = 0; k < 30; ++k) {
    Param<double>* p = params[rng.below(params.size())];
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p->value.size())));
    const double analytic = p->grad.data()[idx];
    const double saved = p->value.data()[idx];
    const double h = 1e-5;
    p->value.data()[idx] = saved + h;
    const double up = m.loss(in, target);
    p->value.data()[idx] = saved - h;
    const double down = m.loss(in, target);
    p->value.data()[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) /
                       std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
    EXPECT_LT(rel, 1e-4) << "coordinate " << k << ": " << analytic << " vs " << numeric;
  }
}

TEST(Positions, SegmentSchemeRestartsAfterBlank) {
  const BelmInput in{{4, 5, Vocab::kBlank, 11, 12, 13}, 2};
  EXPECT_EQ(source_positions(in, PositionScheme::kSegment), (std::vector<int>{0, 1, 0, 0, 1, 2}));
  EXPECT_EQ(source_positions(in, PositionScheme::kAbsolute), (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

}  // namespace
}  // namespace csfusion::belm
