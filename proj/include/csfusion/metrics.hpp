#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csfusion/corpus.hpp"
#include "csfusion/error.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion {

/// Mandarin character or whole English word. unk scores as a Mandarin-class
/// unit with surface `<unk>`.
struct ScoringUnit {
  std::string surface;
  Language lang = Language::kMandarin;
  bool unk = false;

  friend bool operator==(const ScoringUnit& a, const ScoringUnit& b) {
    return a.surface == b.surface && a.lang == b.lang && a.unk == b.unk;
  }
};

/// English pieces are joined into words: a "_" piece opens a word and
/// following plain pieces extend it. A plain piece with no open word starts
/// one anyway.
inline std::vector<ScoringUnit> to_units(const std::vector<TokenId>& u,
                                         const Vocab& vocab) {
  std::vector<ScoringUnit> units;
  bool word_open = false;
  for (TokenId t : u) {
    const Language lang = vocab.classify(t);
    if (lang == Language::kEnglish) {
      const std::string& s = vocab.surface(t);
      if (s.front() == '_') {
        units.push_back({s.substr(1), Language::kEnglish, false});
      } else if (word_open) {
        units.back().surface += s;
      } else {
        units.push_back({s, Language::kEnglish, false});
      }
      word_open = true;
      continue;
    }
    word_open = false;
    if (lang == Language::kMandarin) {
      units.push_back({vocab.surface(t), Language::kMandarin, false});
    } else {
      // Only unk can reach scoring; other specials are rendered as-is.
      units.push_back({vocab.surface(t), Language::kMandarin, true});
    }
  }
  return units;
}

enum class EditKind { kMatch, kSubstitute, kDelete, kInsert };

struct AlignmentOp {
  EditKind kind;
  std::optional<ScoringUnit> ref;
  std::optional<ScoringUnit> hyp;
};

namespace detail {

template <typename T>
std::vector<std::vector<std::size_t>> edit_table(const std::vector<T>& ref,
                                                 const std::vector<T>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<std::size_t>> d(n + 1,
                                          std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d;
}

}  // namespace detail

/// Levenshtein distance with unit costs.
template <typename T>
std::size_t edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return detail::edit_table(ref, hyp)[ref.size()][hyp.size()];
}

/// Minimal-cost alignment. Backtrace prefers Match, then Substitute, then
/// Delete, then Insert among equal-cost moves.
inline std::vector<AlignmentOp> align(const std::vector<ScoringUnit>& ref,
                                      const std::vector<ScoringUnit>& hyp) {
  const auto d = detail::edit_table(ref, hyp);
  std::vector<AlignmentOp> ops;
  std::size_t i = ref.size(), j = hyp.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] &&
        d[i][j] == d[i - 1][j - 1]) {
      ops.push_back({EditKind::kMatch, ref[i - 1], hyp[j - 1]});
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      ops.push_back({EditKind::kSubstitute, ref[i - 1], hyp[j - 1]});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ops.push_back({EditKind::kDelete, ref[i - 1], std::nullopt});
      --i;
    } else {
      ops.push_back({EditKind::kInsert, std::nullopt, hyp[j - 1]});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

struct ErrorCounts {
  std::size_t sub = 0;
  std::size_t del = 0;
  std::size_t ins = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const { return sub + del + ins; }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    sub += o.sub, del += o.del, ins += o.ins, ref_len += o.ref_len;
    return *this;
  }
  friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ErrorCounts, sub, del, ins, ref_len)

/// Substitutions and deletions count under the reference unit's language,
/// insertions under the hypothesis unit's. An inserted unk has no language
/// and lands in `unattributed_ins`, which enters MER only.
struct ScoreReport {
  double mer = 0.0;
  double cer = 0.0;
  double wer = 0.0;
  bool cer_defined = false;
  bool wer_defined = false;
  ErrorCounts mandarin;
  ErrorCounts english;
  std::size_t unattributed_ins = 0;
  std::size_t utterances = 0;

  std::size_t total_errors() const {
    return mandarin.errors() + english.errors() + unattributed_ins;
  }
  std::size_t total_ref_len() const {
    return mandarin.ref_len + english.ref_len;
  }
  friend bool operator==(const ScoreReport&, const ScoreReport&) = default;
};

inline void to_json(nlohmann::json& j, const ScoreReport& r) {
  j = nlohmann::json{{"mer", r.mer},
                     {"cer", r.cer},
                     {"wer", r.wer},
                     {"cer_defined", r.cer_defined},
                     {"wer_defined", r.wer_defined},
                     {"counts",
                      {{"M", r.mandarin},
                       {"E", r.english},
                       {"unattributed_ins", r.unattributed_ins}}},
                     {"utterances", r.utterances}};
}

inline void from_json(const nlohmann::json& j, ScoreReport& r) {
  r.mer = j.at("mer").get<double>();
  r.cer = j.at("cer").get<double>();
  r.wer = j.at("wer").get<double>();
  r.cer_defined = j.at("cer_defined").get<bool>();
  r.wer_defined = j.at("wer_defined").get<bool>();
  r.mandarin = j.at("counts").at("M").get<ErrorCounts>();
  r.english = j.at("counts").at("E").get<ErrorCounts>();
  r.unattributed_ins = j.at("counts").at("unattributed_ins").get<std::size_t>();
  r.utterances = j.at("utterances").get<std::size_t>();
}

/// Accumulates alignments utterance by utterance.
class Scorer {
 public:
  void add(const std::vector<ScoringUnit>& ref,
           const std::vector<ScoringUnit>& hyp) {
    for (const auto& u : ref) counts(u.lang).ref_len++;
    for (const auto& op : align(ref, hyp)) {
      switch (op.kind) {
        case EditKind::kMatch: break;
        case EditKind::kSubstitute: counts(op.ref->lang).sub++; break;
        case EditKind::kDelete: counts(op.ref->lang).del++; break;
        case EditKind::kInsert:
          if (op.hyp->unk) {
            report_.unattributed_ins++;
          } else {
            counts(op.hyp->lang).ins++;
          }
          break;
      }
    }
    report_.utterances++;
  }

  ScoreReport report() const {
    ScoreReport r = report_;
    auto rate = [](std::size_t num, std::size_t den) {
      return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    r.mer = rate(r.total_errors(), r.total_ref_len());
    r.cer = rate(r.mandarin.errors(), r.mandarin.ref_len);
    r.wer = rate(r.english.errors(), r.english.ref_len);
    r.cer_defined = r.mandarin.ref_len > 0;
    r.wer_defined = r.english.ref_len > 0;
    return r;
  }

 private:
  ErrorCounts& counts(Language lang) {
    return lang == Language::kEnglish ? report_.english : report_.mandarin;
  }

  ScoreReport report_;
};

inline ScoreReport score(const std::vector<std::vector<TokenId>>& refs,
                         const std::vector<std::vector<TokenId>>& hyps,
                         const Vocab& vocab) {
  if (refs.size() != hyps.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                std::to_string(refs.size()) + " references vs " +
                    std::to_string(hyps.size()) + " hypotheses");
  }
  Scorer scorer;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    scorer.add(to_units(refs[i], vocab), to_units(hyps[i], vocab));
  }
  return scorer.report();
}

inline ScoreReport score(const Corpus& refs,
                         const std::vector<std::vector<TokenId>>& hyps,
                         const Vocab& vocab) {
  return score(refs.utterances, hyps, vocab);
}

}  // namespace csfusion
