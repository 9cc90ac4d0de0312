#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "csfusion/corpus.hpp"
#include "csfusion/error.hpp"
#include "csfusion/lat.hpp"
#include "csfusion/rng.hpp"
#include "csfusion/textsim.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion {

/// PT: recognizer only pre-trained on its own language, so it renders
/// foreign speech as similar-sounding own-language tokens. FT: fine-tuned with
/// language-aware targets, so foreign speech comes out as unk.
enum class MamMode { kPT, kFT };

NLOHMANN_JSON_SERIALIZE_ENUM(MamMode, {{MamMode::kPT, "PT"},
                                       {MamMode::kFT, "FT"}})

/// Noisy-channel emulation of one monolingual recognizer over text.
struct MamNoiseConfig {
  MamMode mode = MamMode::kFT;
  double p_own_sub = 0.05;
  double p_other_unk = 1.0;
  Range other_expansion_range{1, 1};
  std::uint64_t seed = 1;

  static MamNoiseConfig fine_tuned(std::uint64_t seed = 1) {
    return {MamMode::kFT, 0.05, 1.0, {1, 1}, seed};
  }
  static MamNoiseConfig pre_trained(std::uint64_t seed = 1) {
    return {MamMode::kPT, 0.05, 0.0, {1, 2}, seed};
  }

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_own_sub) || !prob(p_other_unk)) {
      throw Error(ErrorKind::kInvalidConfig, "probabilities must be in [0, 1]");
    }
    if (!other_expansion_range.valid() || other_expansion_range.min < 1) {
      throw Error(ErrorKind::kInvalidConfig,
                  "other_expansion_range must be ordered with min >= 1");
    }
  }
  friend bool operator==(const MamNoiseConfig&, const MamNoiseConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MamNoiseConfig, mode, p_own_sub,
                                                p_other_unk,
                                                other_expansion_range, seed)

inline LanguageSpecificPrediction emulate(const Utterance& u, Language lang,
                                          const MamNoiseConfig& cfg,
                                          const Vocab& vocab,
                                          std::uint64_t stream = 0) {
  cfg.validate();
  detail::require_monolingual_target(lang);
  detail::require_no_specials(u, vocab);
  const auto& pool = vocab.ids_of(lang);
  Rng rng = Rng::derive(cfg.seed, stream, 0x6d616d00 + side_index(lang));
  auto draw = [&]() -> TokenId {
    if (pool.empty()) {
      throw Error(ErrorKind::kEmptyLanguageInventory,
                  std::string(to_string(lang)) + " inventory is empty");
    }
    return pool[rng.below(pool.size())];
  };

  LanguageSpecificPrediction out;
  out.reserve(u.size());
  for (TokenId t : u) {
    if (vocab.classify(t) == lang) {
      out.push_back(rng.bernoulli(cfg.p_own_sub) ? draw() : t);
    } else if (rng.bernoulli(cfg.p_other_unk)) {
      out.push_back(Vocab::kUnk);
    } else {
      const auto k = rng.between(cfg.other_expansion_range.min,
                                 cfg.other_expansion_range.max);
      for (std::int64_t i = 0; i < k; ++i) out.push_back(draw());
    }
  }
  return out;
}

struct EmulatedTriple {
  LanguageSpecificPrediction mandarin;
  LanguageSpecificPrediction english;
  Utterance target;
  friend bool operator==(const EmulatedTriple&, const EmulatedTriple&) = default;
};

/// Both recognizers over a corpus; utterance i uses stream i of each config.
inline std::vector<EmulatedTriple> emulate_corpus(const Corpus& corpus,
                                                  const MamNoiseConfig& cfg_m,
                                                  const MamNoiseConfig& cfg_e,
                                                  const Vocab& vocab) {
  std::vector<EmulatedTriple> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus.utterances[i];
    out.push_back({emulate(u, Language::kMandarin, cfg_m, vocab, i),
                   emulate(u, Language::kEnglish, cfg_e, vocab, i), u});
  }
  return out;
}

}  // namespace csfusion
