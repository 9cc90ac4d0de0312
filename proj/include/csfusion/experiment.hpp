#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "csfusion/belm.hpp"
#include "csfusion/corpus.hpp"
#include "csfusion/error.hpp"
#include "csfusion/mamsim.hpp"
#include "csfusion/metrics.hpp"
#include "csfusion/rng.hpp"
#include "csfusion/textsim.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion {

enum class TrainingSource { kTextSim, kEmulatedMam };

NLOHMANN_JSON_SERIALIZE_ENUM(TrainingSource,
                             {{TrainingSource::kTextSim, "TextSim"},
                              {TrainingSource::kEmulatedMam, "EmulatedMam"}})

/// A pair of recognizer emulations applied to the test set.
struct TestCondition {
  std::string name;
  MamNoiseConfig mam_m;
  MamNoiseConfig mam_e;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TestCondition, name, mam_m, mam_e)

struct ExperimentConfig {
  std::size_t mandarin_units = 200;
  std::size_t english_units = 100;
  GenConfig gen{6000, {6, 16}, 0.8, {1, 3}, {1, 2}, 1};
  SplitFractions split{5000.0 / 6000.0, 500.0 / 6000.0, 500.0 / 6000.0};
  SimParams sim;
  /// Recognizers of the primary test condition, and of training when
  /// `training_source` is EmulatedMam.
  MamNoiseConfig mam_m = MamNoiseConfig::fine_tuned();
  MamNoiseConfig mam_e = MamNoiseConfig::fine_tuned();
  std::string primary_condition = "FT";
  std::vector<TestCondition> extra_conditions{
      {"PT", MamNoiseConfig::pre_trained(), MamNoiseConfig::pre_trained()}};
  belm::BelmConfig belm;
  TrainingSource training_source = TrainingSource::kTextSim;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t beam = 10;
  /// Master seed. Every component seed is derived from it, so the seed
  /// fields inside the component configs are overwritten.
  std::uint64_t seed = 1;

  /// Component configs with their seeds derived from the master seed.
  ExperimentConfig resolved() const {
    ExperimentConfig c = *this;
    auto sub = [&](std::uint64_t salt) { return Rng::mix(seed ^ Rng::mix(salt)); };
    c.gen.seed = sub(1);
    c.sim.seed = sub(2);
    c.mam_m.seed = sub(3);
    c.mam_e.seed = sub(4);
    c.belm.seed = sub(5);
    for (std::size_t i = 0; i < c.extra_conditions.size(); ++i) {
      c.extra_conditions[i].mam_m.seed = sub(100 + 2 * i);
      c.extra_conditions[i].mam_e.seed = sub(101 + 2 * i);
    }
    return c;
  }

  std::uint64_t split_seed() const { return Rng::mix(seed ^ Rng::mix(6)); }
  /// Test-time recognizers draw from different streams than training ones.
  std::uint64_t test_stream_salt() const { return Rng::mix(seed ^ Rng::mix(7)); }

  void validate() const {
    gen.validate();
    sim.validate();
    mam_m.validate();
    mam_e.validate();
    for (const auto& c : extra_conditions) {
      c.mam_m.validate();
      c.mam_e.validate();
      if (c.name.empty() || c.name == primary_condition) {
        throw Error(ErrorKind::kInvalidConfig, "condition names must be unique");
      }
    }
    belm.validate();
    if (batch_size == 0 || beam == 0) {
      throw Error(ErrorKind::kInvalidConfig, "batch_size and beam must be positive");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ExperimentConfig, mandarin_units, english_units, gen, split, sim, mam_m,
    mam_e, primary_condition, extra_conditions, belm, training_source, epochs,
    batch_size, beam, seed)

inline constexpr int kReportSchemaVersion = 1;

struct ConditionResult {
  std::string name;
  MamNoiseConfig mam_m, mam_e;
  double english_unit_fraction = 0.0;
  double mandarin_unit_fraction = 0.0;
  ScoreReport mandarin;  // S_M alone
  ScoreReport english;   // S_E alone
  ScoreReport belm;      // fused output
};

struct ExperimentReport {
  ExperimentConfig config;  // resolved
  std::size_t train_utterances = 0, dev_utterances = 0, test_utterances = 0;
  std::uint64_t train_steps = 0;
  std::vector<double> loss_history;
  double dev_loss = 0.0;
  std::vector<ConditionResult> conditions;

  const ConditionResult& condition(const std::string& name) const {
    for (const auto& c : conditions) {
      if (c.name == name) return c;
    }
    throw Error(ErrorKind::kInvalidArgument, "no condition " + name);
  }
};

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json conditions = nlohmann::json::object();
  for (const auto& c : r.conditions) {
    conditions[c.name] = {
        {"mam_m", c.mam_m},
        {"mam_e", c.mam_e},
        {"test_english_unit_fraction", c.english_unit_fraction},
        {"test_mandarin_unit_fraction", c.mandarin_unit_fraction},
        {"systems", {{"mandarin", c.mandarin}, {"english", c.english}, {"belm", c.belm}}}};
  }
  return {
      {"schema_version", kReportSchemaVersion},
      {"regime_mapping",
       {{"PT", "pre-trained recognizer: foreign tokens become 1-2 random "
               "own-language tokens (p_other_unk=0)"},
        {"FT", "fine-tuned recognizer: foreign tokens become <unk> "
               "(p_other_unk=1)"}}},
      {"config", r.config},
      {"data",
       {{"train_utterances", r.train_utterances},
        {"dev_utterances", r.dev_utterances},
        {"test_utterances", r.test_utterances}}},
      {"training",
       {{"steps", r.train_steps},
        {"loss_history", r.loss_history},
        {"final_loss", r.loss_history.empty() ? 0.0 : r.loss_history.back()},
        {"dev_loss", r.dev_loss}}},
      {"conditions", conditions}};
}

inline std::string summary_table(const ExperimentReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "training source: "
     << (r.config.training_source == TrainingSource::kTextSim ? "TextSim" : "EmulatedMam")
     << ", steps " << r.train_steps << ", train/dev/test " << r.train_utterances
     << "/" << r.dev_utterances << "/" << r.test_utterances << "\n";
  os << "PT = foreign speech rendered as own-language tokens; "
        "FT = foreign speech rendered as <unk>\n\n";
  os << std::left << std::setw(12) << "condition" << std::setw(10) << "system"
     << std::right << std::setw(9) << "CER%" << std::setw(9) << "WER%"
     << std::setw(9) << "MER%" << "\n";
  for (const auto& c : r.conditions) {
    const std::pair<const char*, const ScoreReport*> rows[] = {
        {"Mandarin", &c.mandarin}, {"English", &c.english}, {"BELM", &c.belm}};
    for (const auto& [label, s] : rows) {
      os << std::left << std::setw(12) << c.name << std::setw(10) << label
         << std::right << std::setw(9) << 100.0 * s->cer << std::setw(9)
         << 100.0 * s->wer << std::setw(9) << 100.0 * s->mer << "\n";
    }
  }
  return os.str();
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

inline void flatten_numbers(const nlohmann::json& j, const std::string& prefix,
                            std::map<std::string, double>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten_numbers(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else if (j.is_number()) {
    out[prefix] = j.get<double>();
  } else if (j.is_boolean()) {
    out[prefix] = j.get<bool>() ? 1.0 : 0.0;
  }
}

}  // namespace detail

/// Builds (input, target) pairs from two prediction lists and the targets.
inline std::vector<belm::TrainingPair> make_pairs(
    const std::vector<LanguageSpecificPrediction>& mandarin,
    const std::vector<LanguageSpecificPrediction>& english,
    const std::vector<Utterance>& targets, const Vocab& vocab, std::size_t max_len) {
  if (mandarin.size() != targets.size() || english.size() != targets.size()) {
    throw Error(ErrorKind::kLengthMismatch, "prediction and target counts differ");
  }
  std::vector<belm::TrainingPair> pairs;
  pairs.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    pairs.push_back({belm::build_input(mandarin[i], english[i], vocab, max_len), targets[i]});
  }
  return pairs;
}

/// generate -> split -> training predictions -> train BELM -> for every
/// test condition: emulate, decode, score S_M, S_E and BELM output. When
/// `out_dir` is non-empty every intermediate artifact is written there.
/// Deterministic given the config.
inline ExperimentReport run(const ExperimentConfig& input_config,
                            const std::string& out_dir = {},
                            std::ostream* log = nullptr) {
  input_config.validate();
  const ExperimentConfig cfg = input_config.resolved();
  const std::filesystem::path dir(out_dir);
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(dir);
  auto note = [&](const std::string& msg) {
    if (log) *log << msg << std::endl;
  };

  const Vocab vocab = synthetic_vocab(cfg.mandarin_units, cfg.english_units,
                                      Rng::mix(cfg.seed ^ Rng::mix(8)));
  const Corpus corpus = generate(cfg.gen, vocab);
  const CorpusSplit parts = split(corpus, cfg.split, cfg.split_seed());
  const auto max_len = static_cast<std::size_t>(cfg.belm.max_len);
  if (write) {
    save_vocab(vocab, (dir / "vocab.tsv").string());
    save_corpus(parts.train, vocab, (dir / "train.txt").string());
    save_corpus(parts.dev, vocab, (dir / "dev.txt").string());
    save_corpus(parts.test, vocab, (dir / "test.txt").string());
  }

  auto training_predictions = [&](const Corpus& c, const char* tag) {
    std::vector<LanguageSpecificPrediction> m, e;
    if (cfg.training_source == TrainingSource::kTextSim) {
      for (const auto& p : simulate_corpus(c, cfg.sim, vocab)) {
        m.push_back(p.mandarin);
        e.push_back(p.english);
      }
    } else {
      for (const auto& t : emulate_corpus(c, cfg.mam_m, cfg.mam_e, vocab)) {
        m.push_back(t.mandarin);
        e.push_back(t.english);
      }
    }
    if (write) {
      const std::string ext =
          cfg.training_source == TrainingSource::kTextSim ? ".sim" : ".mam";
      save_predictions(m, vocab, (dir / (std::string(tag) + ext + "M")).string());
      save_predictions(e, vocab, (dir / (std::string(tag) + ext + "E")).string());
    }
    return std::make_pair(m, e);
  };

  const auto [train_m, train_e] = training_predictions(parts.train, "train");
  const auto train_pairs =
      make_pairs(train_m, train_e, parts.train.utterances, vocab, max_len);
  const auto [dev_m, dev_e] = training_predictions(parts.dev, "dev");
  const auto dev_pairs = make_pairs(dev_m, dev_e, parts.dev.utterances, vocab, max_len);

  belm::BelmModel<float> model(cfg.belm, vocab.size());
  note("training BELM: " + std::to_string(model.parameter_count()) + " parameters, " +
       std::to_string(train_pairs.size()) + " pairs");
  belm::TrainOptions options;
  options.epochs = cfg.epochs;
  options.batch_size = cfg.batch_size;
  options.on_epoch = [&](const belm::EpochStats& s) {
    std::ostringstream os;
    os << "epoch " << s.epoch << " steps " << s.steps << " loss " << std::setprecision(5)
       << s.mean_loss;
    note(os.str());
    return true;
  };
  const auto trained = belm::train(model, train_pairs, options);

  ExperimentReport report;
  report.config = cfg;
  report.train_utterances = parts.train.size();
  report.dev_utterances = parts.dev.size();
  report.test_utterances = parts.test.size();
  report.train_steps = trained.steps;
  report.loss_history = trained.epoch_loss;
  double dev_total = 0.0;
  for (const auto& p : dev_pairs) dev_total += static_cast<double>(model.loss(p.input, p.target));
  report.dev_loss = dev_pairs.empty() ? 0.0 : dev_total / static_cast<double>(dev_pairs.size());
  if (write) belm::save_checkpoint(model, (dir / "belm.ckpt").string());

  std::vector<TestCondition> conditions{{cfg.primary_condition, cfg.mam_m, cfg.mam_e}};
  conditions.insert(conditions.end(), cfg.extra_conditions.begin(),
                    cfg.extra_conditions.end());
  for (auto cond : conditions) {
    cond.mam_m.seed ^= cfg.test_stream_salt();
    cond.mam_e.seed ^= cfg.test_stream_salt();
    const auto triples = emulate_corpus(parts.test, cond.mam_m, cond.mam_e, vocab);
    std::vector<LanguageSpecificPrediction> sm, se;
    std::vector<Utterance> fused;
    for (const auto& t : triples) {
      sm.push_back(t.mandarin);
      se.push_back(t.english);
      const auto in = belm::build_input(t.mandarin, t.english, vocab, max_len);
      fused.push_back(belm::decode(model, in, cfg.beam).tokens);
    }
    ConditionResult res;
    res.name = cond.name;
    res.mam_m = cond.mam_m;
    res.mam_e = cond.mam_e;
    res.mandarin = score(parts.test, sm, vocab);
    res.english = score(parts.test, se, vocab);
    res.belm = score(parts.test, fused, vocab);
    const double total = static_cast<double>(res.belm.total_ref_len());
    res.english_unit_fraction =
        total > 0 ? static_cast<double>(res.belm.english.ref_len) / total : 0.0;
    res.mandarin_unit_fraction =
        total > 0 ? static_cast<double>(res.belm.mandarin.ref_len) / total : 0.0;
    if (write) {
      save_predictions(sm, vocab, (dir / ("test." + cond.name + ".mamM")).string());
      save_predictions(se, vocab, (dir / ("test." + cond.name + ".mamE")).string());
      save_predictions(fused, vocab, (dir / ("test." + cond.name + ".belm")).string());
    }
    std::ostringstream os;
    os << cond.name << ": MER S_M " << res.mandarin.mer << " S_E " << res.english.mer
       << " BELM " << res.belm.mer;
    note(os.str());
    report.conditions.push_back(std::move(res));
  }

  if (write) {
    detail::write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
    detail::write_text(dir / "summary.txt", summary_table(report));
  }
  return report;
}

struct DeltaRow {
  std::string key;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // b - a
};

/// Field-wise differences between two report JSON documents over every
/// numeric leaf reachable through objects (arrays are skipped).
inline std::vector<DeltaRow> compare(const nlohmann::json& a, const nlohmann::json& b) {
  if (!a.contains("schema_version") || !b.contains("schema_version") ||
      a.at("schema_version") != b.at("schema_version")) {
    throw Error(ErrorKind::kSchemaMismatch, "schema versions differ");
  }
  std::map<std::string, double> fa, fb;
  detail::flatten_numbers(a, "", fa);
  detail::flatten_numbers(b, "", fb);
  std::vector<DeltaRow> rows;
  for (const auto& [key, va] : fa) {
    auto it = fb.find(key);
    if (it == fb.end()) throw Error(ErrorKind::kSchemaMismatch, "missing field " + key);
    rows.push_back({key, va, it->second, it->second - va});
  }
  if (fa.size() != fb.size()) {
    throw Error(ErrorKind::kSchemaMismatch, "field sets differ");
  }
  return rows;
}

inline std::vector<DeltaRow> compare(const ExperimentReport& a, const ExperimentReport& b) {
  return compare(report_to_json(a), report_to_json(b));
}

}  // namespace csfusion
