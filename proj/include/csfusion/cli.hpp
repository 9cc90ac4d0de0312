#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"

#include "csfusion/belm.hpp"
#include "csfusion/corpus.hpp"
#include "csfusion/error.hpp"
#include "csfusion/experiment.hpp"
#include "csfusion/lat.hpp"
#include "csfusion/mamsim.hpp"
#include "csfusion/metrics.hpp"
#include "csfusion/rng.hpp"
#include "csfusion/textsim.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

namespace detail {

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, path + ": " + e.what());
  }
}

template <typename C>
C read_config(const std::string& path) {
  const auto j = read_json(path);
  try {
    C c = j.get<C>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, path + ": " + e.what());
  }
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

inline std::string percent(double rate) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * rate;
  return os.str();
}

}  // namespace detail

/// Runs one command line. Messages go to `out`/`err`; nothing is written to
/// the process streams directly.
inline int dispatch(int argc, const char* const* argv, std::ostream& out,
                    std::ostream& err) {
  CLI::App app{"Code-switching recognizer fusion toolkit", "csfusion"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads,
                 "Worker threads for matrix kernels. Values above 1 may change "
                 "floating-point summation order and break bitwise reproducibility")
      ->default_val(1)
      ->check(CLI::PositiveNumber);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic code-switching corpus");
  std::string gen_vocab, gen_out, gen_config;
  std::optional<std::size_t> gen_count, gen_m_units, gen_e_units;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--vocab", gen_vocab,
                  "Vocabulary file (written when --mandarin-units and --english-units are set)")
      ->required();
  gen->add_option("--out", gen_out, "Output corpus file")->required();
  gen->add_option("--config", gen_config, "Generator config JSON");
  gen->add_option("--count", gen_count, "Number of utterances");
  gen->add_option("--mandarin-units", gen_m_units, "Synthesize a vocabulary with this many Mandarin units");
  gen->add_option("--english-units", gen_e_units, "... and this many English pieces");
  gen->add_option("--seed", gen_seed, "Random seed");

  // mask
  auto* mask = app.add_subcommand("mask", "Split a corpus into per-language masked copies");
  std::string mask_vocab, mask_in, mask_prefix;
  mask->add_option("--vocab", mask_vocab, "Vocabulary file")->required();
  mask->add_option("--in", mask_in, "Input corpus")->required();
  mask->add_option("--out-prefix", mask_prefix, "Output prefix (default: input path)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Fabricate language-specific predictions from text");
  std::string sim_vocab, sim_in, sim_prefix;
  SimParams sim_params;
  sim->add_option("--vocab", sim_vocab, "Vocabulary file")->required();
  sim->add_option("--in", sim_in, "Input corpus")->required();
  sim->add_option("--out-prefix", sim_prefix, "Output prefix (default: input path)");
  sim->add_option("--p-unk", sim_params.p_unk, "Probability of unk for foreign tokens")
      ->default_val(0.5);
  sim->add_option("--seed", sim_params.seed, "Random seed")->default_val(1);

  // emulate
  auto* emu = app.add_subcommand("emulate", "Emulate monolingual recognizer outputs");
  std::string emu_vocab, emu_in, emu_prefix, emu_cfg_m, emu_cfg_e;
  std::optional<std::uint64_t> emu_seed;
  emu->add_option("--vocab", emu_vocab, "Vocabulary file")->required();
  emu->add_option("--in", emu_in, "Input corpus")->required();
  emu->add_option("--config-m", emu_cfg_m, "Mandarin recognizer noise config JSON")->required();
  emu->add_option("--config-e", emu_cfg_e, "English recognizer noise config JSON")->required();
  emu->add_option("--out-prefix", emu_prefix, "Output prefix (default: input path)");
  emu->add_option("--seed", emu_seed, "Override both config seeds");

  // train
  auto* train = app.add_subcommand("train", "Train a BELM on prediction pairs");
  std::string tr_vocab, tr_man, tr_eng, tr_target, tr_config, tr_ckpt;
  std::size_t tr_epochs = 30, tr_batch = 64;
  std::uint64_t tr_max_steps = 0;
  std::optional<std::uint64_t> tr_seed;
  train->add_option("--vocab", tr_vocab, "Vocabulary file")->required();
  train->add_option("--man", tr_man, "Mandarin prediction file")->required();
  train->add_option("--eng", tr_eng, "English prediction file")->required();
  train->add_option("--target", tr_target, "Target corpus")->required();
  train->add_option("--config", tr_config, "Model config JSON");
  train->add_option("--epochs", tr_epochs, "Training epochs")->default_val(30);
  train->add_option("--batch-size", tr_batch, "Sequences per step")->default_val(64);
  train->add_option("--max-steps", tr_max_steps, "Step limit (0: none)")->default_val(0);
  train->add_option("--seed", tr_seed, "Override the config seed");
  train->add_option("--checkpoint", tr_ckpt, "Output checkpoint")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "Fuse prediction pairs with a trained BELM");
  std::string dec_vocab, dec_ckpt, dec_man, dec_eng, dec_out, dec_config;
  std::size_t dec_beam = 10;
  dec->add_option("--vocab", dec_vocab, "Vocabulary file")->required();
  dec->add_option("--checkpoint", dec_ckpt, "Checkpoint")->required();
  dec->add_option("--man", dec_man, "Mandarin prediction file")->required();
  dec->add_option("--eng", dec_eng, "English prediction file")->required();
  dec->add_option("--beam", dec_beam, "Beam size")->default_val(10)->check(CLI::PositiveNumber);
  dec->add_option("--config", dec_config, "Expected model config JSON");
  dec->add_option("--out", dec_out, "Hypothesis file (default: stdout)");
  std::uint64_t dec_seed = 0;
  dec->add_option("--seed", dec_seed, "Accepted for uniformity; decoding is deterministic");

  // score
  auto* sc = app.add_subcommand("score", "Score hypotheses with MER, CER and WER");
  std::string sc_ref, sc_hyp, sc_vocab;
  bool sc_json = false;
  sc->add_option("--ref", sc_ref, "Reference corpus")->required();
  sc->add_option("--hyp", sc_hyp, "Hypothesis file")->required();
  sc->add_option("--vocab", sc_vocab, "Vocabulary file")->required();
  sc->add_flag("--json", sc_json, "Print the full JSON report");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run the end-to-end fusion experiment");
  std::string exp_config, exp_out;
  std::optional<std::uint64_t> exp_seed;
  exp->add_option("--config", exp_config, "Experiment config JSON")->required();
  exp->add_option("--out", exp_out, "Output directory")->required();
  exp->add_option("--seed", exp_seed, "Override the master seed");
  bool exp_quiet = false;
  exp->add_flag("--quiet", exp_quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kUsage;
  }
  Eigen::setNbThreads(threads);

  try {
    if (*gen) {
      GenConfig cfg = gen_config.empty() ? GenConfig{} : detail::read_config<GenConfig>(gen_config);
      if (gen_count) cfg.utterance_count = *gen_count;
      if (gen_seed) cfg.seed = *gen_seed;
      Vocab vocab;
      if (gen_m_units || gen_e_units) {
        if (!gen_m_units || !gen_e_units) {
          throw Error(ErrorKind::kInvalidArgument,
                      "--mandarin-units and --english-units go together");
        }
        vocab = synthetic_vocab(*gen_m_units, *gen_e_units, cfg.seed);
        save_vocab(vocab, gen_vocab);
      } else {
        vocab = load_vocab(gen_vocab);
      }
      const Corpus corpus = generate(cfg, vocab);
      save_corpus(corpus, vocab, gen_out);
      out << "wrote " << corpus.size() << " utterances to " << gen_out << "\n";
    } else if (*mask) {
      const Vocab vocab = load_vocab(mask_vocab);
      const Corpus corpus = load_corpus(mask_in, vocab);
      const std::string prefix = mask_prefix.empty() ? mask_in : mask_prefix;
      std::vector<Utterance> m, e;
      for (const auto& u : corpus.utterances) {
        m.push_back(mask_to_language(u, Language::kMandarin, vocab));
        e.push_back(mask_to_language(u, Language::kEnglish, vocab));
      }
      save_predictions(m, vocab, prefix + ".man");
      save_predictions(e, vocab, prefix + ".eng");
    } else if (*sim) {
      sim_params.validate();
      const Vocab vocab = load_vocab(sim_vocab);
      const Corpus corpus = load_corpus(sim_in, vocab);
      const std::string prefix = sim_prefix.empty() ? sim_in : sim_prefix;
      std::vector<LanguageSpecificPrediction> m, e;
      for (const auto& p : simulate_corpus(corpus, sim_params, vocab)) {
        m.push_back(p.mandarin);
        e.push_back(p.english);
      }
      save_predictions(m, vocab, prefix + ".simM");
      save_predictions(e, vocab, prefix + ".simE");
      save_corpus(corpus, vocab, prefix + ".tgt");
    } else if (*emu) {
      const Vocab vocab = load_vocab(emu_vocab);
      const Corpus corpus = load_corpus(emu_in, vocab);
      auto cm = detail::read_config<MamNoiseConfig>(emu_cfg_m);
      auto ce = detail::read_config<MamNoiseConfig>(emu_cfg_e);
      if (emu_seed) {
        cm.seed = Rng::mix(*emu_seed ^ Rng::mix(3));
        ce.seed = Rng::mix(*emu_seed ^ Rng::mix(4));
      }
      const std::string prefix = emu_prefix.empty() ? emu_in : emu_prefix;
      std::vector<LanguageSpecificPrediction> m, e;
      for (const auto& t : emulate_corpus(corpus, cm, ce, vocab)) {
        m.push_back(t.mandarin);
        e.push_back(t.english);
      }
      save_predictions(m, vocab, prefix + ".mamM");
      save_predictions(e, vocab, prefix + ".mamE");
    } else if (*train) {
      const Vocab vocab = load_vocab(tr_vocab);
      belm::BelmConfig cfg =
          tr_config.empty() ? belm::BelmConfig{} : detail::read_config<belm::BelmConfig>(tr_config);
      if (tr_seed) cfg.seed = *tr_seed;
      const auto m = load_predictions(tr_man, vocab);
      const auto e = load_predictions(tr_eng, vocab);
      const Corpus target = load_corpus(tr_target, vocab);
      const auto pairs = make_pairs(m, e, target.utterances, vocab,
                                    static_cast<std::size_t>(cfg.max_len));
      belm::BelmModel<float> model(cfg, vocab.size());
      belm::TrainOptions options;
      options.epochs = tr_epochs;
      options.batch_size = tr_batch;
      options.max_steps = tr_max_steps;
      options.on_epoch = [&](const belm::EpochStats& s) {
        out << "epoch " << s.epoch << " steps " << s.steps << " loss "
            << std::setprecision(6) << s.mean_loss << "\n";
        return true;
      };
      belm::train(model, pairs, options);
      belm::save_checkpoint(model, tr_ckpt);
    } else if (*dec) {
      const Vocab vocab = load_vocab(dec_vocab);
      std::optional<belm::BelmConfig> expected;
      if (!dec_config.empty()) expected = detail::read_config<belm::BelmConfig>(dec_config);
      const auto model =
          belm::load_checkpoint<float>(dec_ckpt, expected ? &*expected : nullptr);
      if (model.vocab_size() != vocab.size()) {
        throw Error(ErrorKind::kShapeMismatch, "checkpoint vocabulary size differs from --vocab");
      }
      const auto m = load_predictions(dec_man, vocab);
      const auto e = load_predictions(dec_eng, vocab);
      if (m.size() != e.size()) {
        throw Error(ErrorKind::kLengthMismatch, "prediction files differ in length");
      }
      std::ostringstream hyps;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const auto in = belm::build_input(m[i], e[i], vocab,
                                          static_cast<std::size_t>(model.config().max_len));
        hyps << vocab.decode(belm::decode(model, in, dec_beam).tokens) << "\n";
      }
      if (dec_out.empty()) {
        out << hyps.str();
      } else {
        detail::write_file(dec_out, hyps.str());
      }
    } else if (*sc) {
      const Vocab vocab = load_vocab(sc_vocab);
      const Corpus ref = load_corpus(sc_ref, vocab);
      const auto hyp = load_predictions(sc_hyp, vocab);
      const ScoreReport r = score(ref, hyp, vocab);
      if (sc_json) {
        out << nlohmann::json(r).dump(2) << "\n";
      } else {
        out << "MER " << detail::percent(r.mer) << " CER "
            << (r.cer_defined ? detail::percent(r.cer) : "n/a") << " WER "
            << (r.wer_defined ? detail::percent(r.wer) : "n/a") << "\n";
      }
    } else if (*exp) {
      auto cfg = detail::read_config<ExperimentConfig>(exp_config);
      if (exp_seed) cfg.seed = *exp_seed;
      const auto report = run(cfg, exp_out, exp_quiet ? nullptr : &err);
      out << summary_table(report);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidArgument ? kUsage : kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}

}  // namespace csfusion::cli
