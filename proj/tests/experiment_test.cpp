#include <gtest/gtest.h>

#include "csfusion/experiment.hpp"
#include "test_util.hpp"

namespace csfusion {
namespace {

ExperimentConfig small_experiment() {
  ExperimentConfig c;
  c.mandarin_units = 30;
  c.english_units = 20;
  c.gen.utterance_count = 120;
  c.gen.len_range = {3, 6};
  c.split = {0.8, 0.1, 0.1};
  c.belm.enc_layers = 1;
  c.belm.d_model = 16;
  c.belm.heads = 2;
  c.belm.d_ff = 24;
  c.belm.warmup_steps = 5;
  c.epochs = 2;
  c.batch_size = 16;
  c.beam = 2;
  c.seed = 5;
  return c;
}

TEST(ExperimentConfig, JsonRoundTripAndResolution) {
  const ExperimentConfig c = small_experiment();
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(j.at("training_source"), "TextSim");
  const auto r1 = c.resolved(), r2 = c.resolved();
  EXPECT_EQ(nlohmann::json(r1), nlohmann::json(r2));
  EXPECT_NE(r1.gen.seed, r1.sim.seed);
  EXPECT_NE(r1.mam_m.seed, r1.mam_e.seed);
  ExperimentConfig other = c;
  other.seed = 6;
  EXPECT_NE(other.resolved().belm.seed, r1.belm.seed);
  // Defaults match the desk-scale fusion setup.
  const ExperimentConfig d;
  EXPECT_EQ(d.mandarin_units, 200u);
  EXPECT_EQ(d.english_units, 100u);
  EXPECT_EQ(d.mam_m.p_other_unk, 1.0);
  EXPECT_EQ(d.extra_conditions.at(0).mam_m.p_other_unk, 0.0);
  EXPECT_EQ(d.extra_conditions.at(0).mam_m.other_expansion_range, (Range{1, 2}));
}

TEST(ExperimentConfig, Validation) {
  ExperimentConfig c = small_experiment();
  c.extra_conditions.push_back({"FT", MamNoiseConfig::fine_tuned(), MamNoiseConfig::fine_tuned()});
  EXPECT_THROW(c.validate(), Error);
  c = small_experiment();
  c.beam = 0;
  EXPECT_THROW(c.validate(), Error);
  c = small_experiment();
  c.belm.heads = 3;
  EXPECT_THROW(run(c), Error);
}

TEST(Experiment, WritesArtifactsDeterministically) {
  const auto a = testing::temp_dir("exp_a"), b = testing::temp_dir("exp_b");
  const auto ra = run(small_experiment(), a.string());
  run(small_experiment(), b.string());
  for (const char* f : {"vocab.tsv", "train.txt", "dev.txt", "test.txt", "train.simM",
                        "train.simE", "dev.simM", "belm.ckpt", "test.FT.mamM",
                        "test.FT.mamE", "test.FT.belm", "test.PT.belm", "report.json",
                        "summary.txt"}) {
    ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
    EXPECT_EQ(testing::read_file(a / f), testing::read_file(b / f)) << f;
  }
  EXPECT_EQ(ra.train_utterances, 96u);
  EXPECT_EQ(ra.test_utterances, 12u);
  EXPECT_EQ(ra.loss_history.size(), 2u);
  EXPECT_EQ(ra.train_steps, 12u);
  ASSERT_EQ(ra.conditions.size(), 2u);
  EXPECT_EQ(ra.conditions[0].name, "FT");
  EXPECT_EQ(ra.conditions[1].name, "PT");
  const auto& ft = ra.condition("FT");
  EXPECT_NEAR(ft.english_unit_fraction + ft.mandarin_unit_fraction, 1.0, 1e-12);
  EXPECT_EQ(ft.belm.utterances, 12u);
  // The saved hypotheses score to the reported numbers.
  const Vocab v = load_vocab((a / "vocab.tsv").string());
  const auto reref = score(load_corpus((a / "test.txt").string(), v),
                           load_predictions((a / "test.FT.belm").string(), v), v);
  EXPECT_EQ(reref, ft.belm);
  const auto report = nlohmann::json::parse(testing::read_file(a / "report.json"));
  EXPECT_EQ(report.at("schema_version"), kReportSchemaVersion);
  EXPECT_TRUE(report.at("regime_mapping").contains("PT"));
  EXPECT_TRUE(report.at("conditions").at("PT").at("systems").contains("belm"));
  EXPECT_NE(testing::read_file(a / "summary.txt").find("BELM"), std::string::npos);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Experiment, EmulatedTrainingSource) {
  ExperimentConfig c = small_experiment();
  c.training_source = TrainingSource::kEmulatedMam;
  c.epochs = 1;
  const auto dir = testing::temp_dir("exp_mam");
  const auto r = run(c, dir.string());
  EXPECT_TRUE(std::filesystem::exists(dir / "train.mamM"));
  EXPECT_EQ(r.loss_history.size(), 1u);
  std::filesystem::remove_all(dir);
}

TEST(Compare, DeltasAndSchema) {
  ExperimentConfig c = small_experiment();
  c.epochs = 1;
  const auto r1 = report_to_json(run(c));
  c.seed = 9;
  const auto r2 = report_to_json(run(c));
  for (const auto& row : compare(r1, r1)) EXPECT_EQ(row.delta, 0.0) << row.key;
  const auto forward = compare(r1, r2), backward = compare(r2, r1);
  ASSERT_EQ(forward.size(), backward.size());
  bool any_change = false;
  for (std::size_t i = 0; i < forward.size(); ++i) {
    EXPECT_EQ(forward[i].key, backward[i].key);
    EXPECT_EQ(forward[i].delta, -backward[i].delta);
    any_change |= forward[i].delta != 0.0;
  }
  EXPECT_TRUE(any_change);
  auto bumped = r2;
  bumped["schema_version"] = kReportSchemaVersion + 1;
  try {
    compare(r1, bumped);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchemaMismatch);
  }
  auto trimmed = r2;
  trimmed["conditions"].erase("PT");
  EXPECT_THROW(compare(r1, trimmed), Error);
}

}  // namespace
}  // namespace csfusion
