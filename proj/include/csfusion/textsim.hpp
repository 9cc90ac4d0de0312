#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"

#include "csfusion/corpus.hpp"
#include "csfusion/error.hpp"
#include "csfusion/lat.hpp"
#include "csfusion/rng.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion {

struct SimParams {
  double p_unk = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(p_unk >= 0.0 && p_unk <= 1.0)) {
      throw Error(ErrorKind::kInvalidConfig, "p_unk must be in [0, 1]");
    }
  }
  friend bool operator==(const SimParams&, const SimParams&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimParams, p_unk, seed)

inline std::uint64_t side_index(Language lang) {
  return lang == Language::kMandarin ? 0 : 1;
}

/// Fabricates the `lang` recognizer's output from ground truth. Own-language
/// tokens are kept; each other-language token becomes unk with probability
/// p_unk, otherwise a uniformly drawn non-special `lang` token. `stream`
/// selects the random stream (normally the utterance index).
inline LanguageSpecificPrediction simulate_prediction(
    const Utterance& u, Language lang, const SimParams& params,
    const Vocab& vocab, std::uint64_t stream = 0) {
  params.validate();
  detail::require_monolingual_target(lang);
  detail::require_no_specials(u, vocab);
  const auto& pool = vocab.ids_of(lang);
  Rng rng = Rng::derive(params.seed, stream, side_index(lang));
  LanguageSpecificPrediction out(u);
  for (auto& t : out) {
    if (vocab.classify(t) == lang) continue;
    if (rng.bernoulli(params.p_unk)) {
      t = Vocab::kUnk;
      continue;
    }
    if (pool.empty()) {
      throw Error(ErrorKind::kEmptyLanguageInventory,
                  std::string(to_string(lang)) + " replacement pool is empty");
    }
    t = pool[rng.below(pool.size())];
  }
  return out;
}

struct PredictionPair {
  LanguageSpecificPrediction mandarin;
  LanguageSpecificPrediction english;
  friend bool operator==(const PredictionPair&, const PredictionPair&) = default;
};

inline PredictionPair simulate_pair(const Utterance& u, const SimParams& params,
                                    const Vocab& vocab,
                                    std::uint64_t stream = 0) {
  return {simulate_prediction(u, Language::kMandarin, params, vocab, stream),
          simulate_prediction(u, Language::kEnglish, params, vocab, stream)};
}

/// One pair per utterance; utterance i uses stream i.
inline std::vector<PredictionPair> simulate_corpus(const Corpus& corpus,
                                                   const SimParams& params,
                                                   const Vocab& vocab) {
  std::vector<PredictionPair> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.push_back(simulate_pair(corpus.utterances[i], params, vocab, i));
  }
  return out;
}

}  // namespace csfusion
