#pragma once

#include "csfusion/error.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion {

namespace detail {

inline void require_monolingual_target(Language lang) {
  if (lang == Language::kSpecial) {
    throw Error(ErrorKind::kInvalidArgument,
                "target language must be Mandarin or English");
  }
}

inline void require_no_specials(const Utterance& u, const Vocab& vocab) {
  for (TokenId t : u) {
    if (vocab.is_special(t)) {
      throw Error(ErrorKind::kSpecialTokenInInput, vocab.surface(t));
    }
  }
}

}  // namespace detail

/// Language-aware target: every token of the other language becomes unk,
/// position for position. unk already in the input stays unk, which makes
/// masking idempotent; the other specials are rejected.
inline Utterance mask_to_language(const Utterance& u, Language lang,
                                  const Vocab& vocab) {
  detail::require_monolingual_target(lang);
  for (TokenId t : u) {
    if (t != Vocab::kUnk && vocab.is_special(t)) {
      throw Error(ErrorKind::kSpecialTokenInInput, vocab.surface(t));
    }
  }
  Utterance out(u);
  for (auto& t : out) {
    if (vocab.classify(t) != lang) t = Vocab::kUnk;
  }
  return out;
}

}  // namespace csfusion
