#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "csfusion/error.hpp"
#include "csfusion/rng.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion {

/// Inclusive integer range.
struct Range {
  int min = 1;
  int max = 1;

  bool valid() const { return min <= max; }
  friend bool operator==(const Range&, const Range&) = default;
};

inline void to_json(nlohmann::json& j, const Range& r) {
  j = nlohmann::json::array({r.min, r.max});
}

inline void from_json(const nlohmann::json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorKind::kInvalidConfig, "range must be [min, max]");
  }
  r.min = j.at(0).get<int>();
  r.max = j.at(1).get<int>();
}

/// Synthetic intra-sentential code-switching corpus parameters.
struct GenConfig {
  std::size_t utterance_count = 1000;
  Range len_range{6, 16};
  double cs_rate = 0.8;
  Range span_len_range{1, 3};
  Range spans_per_utt_range{1, 2};
  std::uint64_t seed = 1;

  void validate() const {
    if (utterance_count == 0) {
      throw Error(ErrorKind::kInvalidConfig, "utterance_count must be positive");
    }
    if (!len_range.valid() || len_range.min < 1) {
      throw Error(ErrorKind::kInvalidConfig, "len_range must be ordered, min >= 1");
    }
    if (!span_len_range.valid() || span_len_range.min < 1) {
      throw Error(ErrorKind::kInvalidConfig,
                  "span_len_range must be ordered, min >= 1");
    }
    if (!spans_per_utt_range.valid() || spans_per_utt_range.min < 1) {
      throw Error(ErrorKind::kInvalidConfig,
                  "spans_per_utt_range must be ordered, min >= 1");
    }
    if (!(cs_rate >= 0.0 && cs_rate <= 1.0)) {
      throw Error(ErrorKind::kInvalidConfig, "cs_rate must be in [0, 1]");
    }
  }

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenConfig, utterance_count,
                                                len_range, cs_rate,
                                                span_len_range,
                                                spans_per_utt_range, seed)

struct Corpus {
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Span lengths that survive placement into an utterance of `length` tokens.
/// Spans need one Mandarin token between neighbours, so trailing spans are
/// dropped until they fit and a lone oversized span is clipped to `length`.
inline std::vector<int> fit_spans(int length, std::vector<int> spans) {
  auto needed = [&] {
    int total = 0;
    for (int k : spans) total += k;
    return total + static_cast<int>(spans.size()) - 1;
  };
  while (spans.size() > 1 && needed() > length) spans.pop_back();
  if (spans.size() == 1 && spans[0] > length) spans[0] = length;
  return spans;
}

/// Deterministic for fixed (config, vocab). Every utterance draws its own
/// stream from (seed, index).
inline Corpus generate(const GenConfig& config, const Vocab& vocab) {
  config.validate();
  const auto& mandarin = vocab.ids_of(Language::kMandarin);
  const auto& english = vocab.ids_of(Language::kEnglish);
  const auto& initial = vocab.word_initial_ids();
  if (mandarin.empty()) {
    throw Error(ErrorKind::kEmptyLanguageInventory, "no Mandarin tokens");
  }
  if (config.cs_rate > 0.0 && (english.empty() || initial.empty())) {
    throw Error(ErrorKind::kEmptyLanguageInventory,
                "code-switching needs word-initial English pieces");
  }

  Corpus corpus;
  corpus.utterances.reserve(config.utterance_count);
  for (std::size_t i = 0; i < config.utterance_count; ++i) {
    Rng rng = Rng::derive(config.seed, i, 0x67656e);
    const int length = static_cast<int>(
        rng.between(config.len_range.min, config.len_range.max));
    Utterance u(static_cast<std::size_t>(length));
    for (auto& t : u) t = mandarin[rng.below(mandarin.size())];

    if (rng.bernoulli(config.cs_rate)) {
      const int count = static_cast<int>(rng.between(
          config.spans_per_utt_range.min, config.spans_per_utt_range.max));
      std::vector<int> spans;
      for (int s = 0; s < count; ++s) {
        spans.push_back(static_cast<int>(rng.between(
            config.span_len_range.min, config.span_len_range.max)));
      }
      spans = fit_spans(length, std::move(spans));

      // Distribute the spare Mandarin tokens over the gaps around the spans;
      // interior gaps keep one token of their own.
      int english_total = 0;
      for (int k : spans) english_total += k;
      const int n_spans = static_cast<int>(spans.size());
      std::vector<int> gaps(static_cast<std::size_t>(n_spans) + 1, 0);
      for (int g = 1; g < n_spans; ++g) gaps[static_cast<std::size_t>(g)] = 1;
      const int spare = length - english_total - (n_spans - 1);
      for (int s = 0; s < spare; ++s) ++gaps[rng.below(gaps.size())];

      std::size_t pos = 0;
      for (int s = 0; s < n_spans; ++s) {
        pos += static_cast<std::size_t>(gaps[static_cast<std::size_t>(s)]);
        for (int k = 0; k < spans[static_cast<std::size_t>(s)]; ++k, ++pos) {
          u[pos] = k == 0 ? initial[rng.below(initial.size())]
                          : english[rng.below(english.size())];
        }
      }
    }
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

namespace detail {

template <typename LineFn>
void for_each_line(const std::string& path, LineFn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(line, line_no);
  }
  if (in.bad()) throw Error(ErrorKind::kIo, "read failed: " + path);
}

inline void write_lines(const std::vector<std::vector<TokenId>>& rows,
                        const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  for (const auto& r : rows) out << vocab.decode(r) << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

inline std::vector<TokenId> encode_line(const std::string& line,
                                        const Vocab& vocab,
                                        std::size_t line_no) {
  std::vector<TokenId> out;
  for (auto piece : split_whitespace(line)) {
    auto id = vocab.find(piece);
    if (!id) {
      throw Error(ErrorKind::kParseError,
                  "unknown surface '" + std::string(piece) + "'", line_no);
    }
    out.push_back(*id);
  }
  return out;
}

}  // namespace detail

/// Corpus file: one utterance per line, surfaces separated by spaces. Lines
/// must be non-empty and free of special tokens.
inline Corpus load_corpus(const std::string& path, const Vocab& vocab) {
  Corpus corpus;
  detail::for_each_line(path, [&](const std::string& line, std::size_t no) {
    auto u = detail::encode_line(line, vocab, no);
    if (u.empty()) throw Error(ErrorKind::kParseError, "empty utterance", no);
    for (TokenId t : u) {
      if (vocab.is_special(t)) {
        throw Error(ErrorKind::kParseError,
                    "special token '" + vocab.surface(t) + "' in corpus", no);
      }
    }
    corpus.utterances.push_back(std::move(u));
  });
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const Vocab& vocab,
                        const std::string& path) {
  detail::write_lines(corpus.utterances, vocab, path);
}

/// Prediction and hypothesis files share the corpus format but may contain
/// `<unk>` and empty lines.
inline std::vector<std::vector<TokenId>> load_predictions(
    const std::string& path, const Vocab& vocab) {
  std::vector<std::vector<TokenId>> rows;
  detail::for_each_line(path, [&](const std::string& line, std::size_t no) {
    auto u = detail::encode_line(line, vocab, no);
    for (TokenId t : u) {
      if (t != Vocab::kUnk && vocab.is_special(t)) {
        throw Error(ErrorKind::kParseError,
                    "special token '" + vocab.surface(t) + "' in prediction",
                    no);
      }
    }
    rows.push_back(std::move(u));
  });
  return rows;
}

inline void save_predictions(const std::vector<std::vector<TokenId>>& rows,
                             const Vocab& vocab, const std::string& path) {
  detail::write_lines(rows, vocab, path);
}

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SplitFractions, train, dev,
                                                test)

struct CorpusSplit {
  Corpus train, dev, test;
};

/// Seeded shuffle, then dev and test take floor(n * fraction) utterances and
/// train keeps the remainder.
inline CorpusSplit split(const Corpus& corpus, const SplitFractions& f,
                         std::uint64_t seed) {
  const double sum = f.train + f.dev + f.test;
  if (!(f.train > 0.0 && f.dev > 0.0 && f.test > 0.0) ||
      std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::kBadFractions,
                "fractions must be positive and sum to 1");
  }
  const std::size_t n = corpus.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, 0, 0x73706c);
  rng.shuffle(order.begin(), order.end());

  auto take = [n](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
  };
  const std::size_t n_dev = take(f.dev);
  const std::size_t n_test = take(f.test);
  const std::size_t n_train = n - n_dev - n_test;

  CorpusSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    Corpus& dst = i < n_train ? out.train
                  : i < n_train + n_dev ? out.dev
                                        : out.test;
    dst.utterances.push_back(corpus.utterances[order[i]]);
  }
  return out;
}

}  // namespace csfusion
