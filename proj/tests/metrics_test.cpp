#include <algorithm>
#include <functional>

#include <gtest/gtest.h>

#include "csfusion/corpus.hpp"
#include "csfusion/mamsim.hpp"
#include "csfusion/metrics.hpp"
#include "csfusion/rng.hpp"
#include "test_util.hpp"

namespace csfusion {
namespace {

using L = Language;

TEST(Units, AssembleEnglishWords) {
  const Vocab v = testing::example_vocab();
  const auto units = to_units(v.encode("非 常 _interpret er _friend ly"), v);
  ASSERT_EQ(units.size(), 4u);
  EXPECT_EQ(units[0], (ScoringUnit{"非", L::kMandarin, false}));
  EXPECT_EQ(units[1], (ScoringUnit{"常", L::kMandarin, false}));
  EXPECT_EQ(units[2], (ScoringUnit{"interpreter", L::kEnglish, false}));
  EXPECT_EQ(units[3], (ScoringUnit{"friendly", L::kEnglish, false}));
  EXPECT_TRUE(to_units({}, v).empty());
  const auto sleep = to_units(v.encode("_sleep _tight"), v);
  ASSERT_EQ(sleep.size(), 2u);
  EXPECT_EQ(sleep[0].surface, "sleep");
  EXPECT_EQ(sleep[1].surface, "tight");
}

TEST(Units, UnkAndOrphanPieces) {
  const Vocab v = testing::example_vocab();
  const auto units = to_units({v.id("ly"), Vocab::kUnk, v.id("er"), v.id("你")}, v);
  ASSERT_EQ(units.size(), 4u);
  EXPECT_EQ(units[0], (ScoringUnit{"ly", L::kEnglish, false}));
  EXPECT_TRUE(units[1].unk);
  EXPECT_EQ(units[1].surface, "<unk>");
  // unk breaks the word, so "er" starts a new one.
  EXPECT_EQ(units[2].surface, "er");
}

std::size_t brute(const std::vector<int>& a, const std::vector<int>& b) {
  std::function<std::size_t(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    return std::min({rec(i + 1, j + 1) + (a[i] == b[j] ? 0u : 1u), rec(i + 1, j) + 1,
                     rec(i, j + 1) + 1});
  };
  return rec(0, 0);
}

std::vector<std::vector<int>> all_strings(int max_len, int alphabet) {
  std::vector<std::vector<int>> out{{}};
  for (std::size_t start = 0; start < out.size(); ++start) {
    if (static_cast<int>(out[start].size()) == max_len) continue;
    for (int c = 0; c < alphabet; ++c) {
      auto s = out[start];
      s.push_back(c);
      out.push_back(s);
    }
  }
  return out;
}

TEST(EditDistance, MatchesBruteForceExhaustively) {
  const auto strings = all_strings(4, 3);
  ASSERT_EQ(strings.size(), 121u);
  for (const auto& a : strings) {
    for (const auto& b : strings) ASSERT_EQ(edit_distance(a, b), brute(a, b));
  }
}

TEST(Align, OpsAreConsistentWithDistance) {
  const Vocab v = testing::example_vocab();
  auto units = [&](const char* s) { return to_units(v.encode(s), v); };
  EXPECT_TRUE(std::all_of(align(units("你 好"), units("你 好")).begin(),
                          align(units("你 好"), units("你 好")).end(),
                          [](const AlignmentOp& op) { return op.kind == EditKind::kMatch; }));
  const auto ops = align(units("你 好 非"), units("你 常 非"));
  ASSERT_EQ(ops.size(), 3u);
  EXPECT_EQ(ops[1].kind, EditKind::kSubstitute);
  EXPECT_EQ(ops[1].ref->surface, "好");
  EXPECT_EQ(ops[1].hyp->surface, "常");

  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoringUnit> a, b;
    for (auto* s : {&a, &b}) {
      const auto n = rng.below(6);
      for (std::size_t i = 0; i < n; ++i) {
        s->push_back({std::string(1, static_cast<char>('a' + rng.below(3))), L::kMandarin, false});
      }
    }
    std::size_t cost = 0, refs = 0, hyps = 0;
    for (const auto& op : align(a, b)) {
      switch (op.kind) {
        case EditKind::kMatch:
          ASSERT_TRUE(op.ref && op.hyp);
          ASSERT_EQ(*op.ref, *op.hyp);
          break;
        case EditKind::kSubstitute:
          ASSERT_TRUE(op.ref && op.hyp);
          ASSERT_FALSE(*op.ref == *op.hyp);
          ++cost;
          break;
        case EditKind::kDelete: ASSERT_TRUE(op.ref && !op.hyp); ++cost; break;
        case EditKind::kInsert: ASSERT_TRUE(!op.ref && op.hyp); ++cost; break;
      }
      refs += op.ref.has_value();
      hyps += op.hyp.has_value();
    }
    EXPECT_EQ(cost, edit_distance(a, b));
    EXPECT_EQ(refs, a.size());
    EXPECT_EQ(hyps, b.size());
  }
}

TEST(Align, TieBreakPrefersSubstitution) {
  const std::vector<ScoringUnit> ref{{"a", L::kMandarin, false}};
  const std::vector<ScoringUnit> hyp{{"b", L::kMandarin, false}};
  const auto ops = align(ref, hyp);
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_EQ(ops[0].kind, EditKind::kSubstitute);
}

TEST(Score, PerfectHypothesis) {
  const Vocab v = testing::example_vocab();
  const std::vector<Utterance> refs{v.encode("你 好 _hi"), v.encode("非 常 _friend ly")};
  const auto r = score(refs, refs, v);
  EXPECT_EQ(r.mer, 0.0);
  EXPECT_EQ(r.cer, 0.0);
  EXPECT_EQ(r.wer, 0.0);
  EXPECT_TRUE(r.cer_defined && r.wer_defined);
  EXPECT_EQ(r.mandarin.ref_len, 4u);
  EXPECT_EQ(r.english.ref_len, 2u);
  EXPECT_EQ(r.utterances, 2u);
}

TEST(Score, TenMandarinUnitsOneSubstitution) {
  const Vocab v = testing::example_vocab();
  const Utterance ref = v.encode("你 好 非 常 第 一 你 好 非 常");
  Utterance hyp = ref;
  hyp[3] = v.id("第");
  const auto r = score({ref}, {hyp}, v);
  EXPECT_DOUBLE_EQ(r.mer, 0.10);
  EXPECT_DOUBLE_EQ(r.cer, 0.10);
  EXPECT_EQ(r.wer, 0.0);
  EXPECT_FALSE(r.wer_defined);
  EXPECT_EQ(r.mandarin.sub, 1u);
}

TEST(Score, UnkAttribution) {
  const Vocab v = testing::example_vocab();
  // unk replacing an English word: substitution charged to English.
  auto r = score({v.encode("你 _hi")}, {{v.id("你"), Vocab::kUnk}}, v);
  EXPECT_EQ(r.english.sub, 1u);
  EXPECT_EQ(r.mandarin.errors(), 0u);
  EXPECT_DOUBLE_EQ(r.mer, 0.5);
  // Inserted unk: enters MER only.
  r = score({v.encode("你 好")}, {{v.id("你"), v.id("好"), Vocab::kUnk}}, v);
  EXPECT_EQ(r.unattributed_ins, 1u);
  EXPECT_EQ(r.cer, 0.0);
  EXPECT_DOUBLE_EQ(r.mer, 0.5);
  // Inserted English word: charged to English even with no English reference.
  r = score({v.encode("你 好")}, {v.encode("你 好 _hi")}, v);
  EXPECT_EQ(r.english.ins, 1u);
  EXPECT_FALSE(r.wer_defined);
  EXPECT_EQ(r.wer, 0.0);
}

TEST(Score, LengthMismatch) {
  const Vocab v = testing::example_vocab();
  try {
    score({v.encode("你")}, {}, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLengthMismatch);
  }
}

TEST(Score, DecompositionAndPartition) {
  const Vocab v = synthetic_vocab(40, 30, 5);
  GenConfig c;
  c.utterance_count = 200;
  c.seed = 6;
  const Corpus refs = generate(c, v);
  const auto hyps = emulate_corpus(refs, MamNoiseConfig::pre_trained(2),
                                   MamNoiseConfig::fine_tuned(3), v);
  std::vector<Utterance> hyp;
  for (const auto& t : hyps) hyp.push_back(t.mandarin);
  const auto r = score(refs, hyp, v);
  std::size_t errors = 0, ref_len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto ru = to_units(refs.utterances[i], v);
    ref_len += ru.size();
    for (const auto& op : align(ru, to_units(hyp[i], v))) errors += op.kind != EditKind::kMatch;
  }
  EXPECT_EQ(r.total_ref_len(), ref_len);
  EXPECT_EQ(r.total_errors(), errors);
  EXPECT_DOUBLE_EQ(r.mer, static_cast<double>(errors) / static_cast<double>(ref_len));
  EXPECT_DOUBLE_EQ(r.cer, static_cast<double>(r.mandarin.errors()) / r.mandarin.ref_len);
  EXPECT_DOUBLE_EQ(r.wer, static_cast<double>(r.english.errors()) / r.english.ref_len);
  EXPECT_GT(r.mer, 0.0);
}

TEST(Score, ZeroIffEqualAndMonotoneUnderInjection) {
  const Vocab v = synthetic_vocab(40, 30, 5);
  GenConfig c;
  c.utterance_count = 50;
  const Corpus refs = generate(c, v);
  EXPECT_EQ(score(refs, refs.utterances, v).mer, 0.0);
  auto hyp = refs.utterances;
  const double base = score(refs, hyp, v).mer;
  const TokenId m0 = v.ids_of(L::kMandarin)[0], m1 = v.ids_of(L::kMandarin)[1];
  for (auto& u : hyp) {
    for (auto& t : u) {
      if (v.classify(t) == L::kMandarin) {
        t = t == m0 ? m1 : m0;
        break;
      }
    }
  }
  EXPECT_GT(score(refs, hyp, v).mer, base);
}

TEST(ScoreJson, Shape) {
  const Vocab v = testing::example_vocab();
  const auto r = score({v.encode("你 _hi")}, {v.encode("好 _hi")}, v);
  const nlohmann::json j = r;
  EXPECT_EQ(j.at("counts").at("M").at("sub"), 1);
  EXPECT_EQ(j.at("counts").at("E").at("ref_len"), 1);
  EXPECT_EQ(j.at("utterances"), 1);
  EXPECT_EQ(j.get<ScoreReport>(), r);
}

}  // namespace
}  // namespace csfusion
