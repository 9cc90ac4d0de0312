#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csfusion/error.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion::belm {

/// Mandarin prediction, blank, English prediction.
struct BelmInput {
  std::vector<TokenId> tokens;
  std::size_t blank_pos = 0;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const BelmInput&, const BelmInput&) = default;
};

inline BelmInput build_input(const LanguageSpecificPrediction& mandarin,
                             const LanguageSpecificPrediction& english,
                             const Vocab& vocab, std::size_t max_len) {
  auto check = [&](const LanguageSpecificPrediction& p, Language lang) {
    for (TokenId t : p) {
      if (t != Vocab::kUnk && vocab.classify(t) != lang) {
        throw Error(ErrorKind::kPurityViolation,
                    "'" + vocab.surface(t) + "' in the " +
                        std::string(to_string(lang)) + " segment");
      }
    }
  };
  check(mandarin, Language::kMandarin);
  check(english, Language::kEnglish);
  const std::size_t total = mandarin.size() + english.size() + 1;
  if (total > max_len) {
    throw Error(ErrorKind::kTooLong, "input of " + std::to_string(total) +
                                         " tokens exceeds max_len " +
                                         std::to_string(max_len));
  }
  BelmInput in;
  in.tokens.reserve(total);
  in.tokens.insert(in.tokens.end(), mandarin.begin(), mandarin.end());
  in.blank_pos = in.tokens.size();
  in.tokens.push_back(Vocab::kBlank);
  in.tokens.insert(in.tokens.end(), english.begin(), english.end());
  return in;
}

}  // namespace csfusion::belm
