#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csfusion/error.hpp"
#include "csfusion/rng.hpp"

namespace csfusion {

enum class Language : std::uint8_t { kMandarin, kEnglish, kSpecial };

inline std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::kMandarin: return "Mandarin";
    case Language::kEnglish: return "English";
    case Language::kSpecial: return "Special";
  }
  return "?";
}

/// The language whose tokens get masked when targeting `lang`.
inline Language other_language(Language lang) {
  return lang == Language::kMandarin ? Language::kEnglish
                                     : Language::kMandarin;
}

using TokenId = std::int32_t;

/// A transcript as token ids. Never contains blank, sos or eos.
using Utterance = std::vector<TokenId>;

/// Output of one monolingual recognizer (or its simulation): own-language
/// ids and unk only.
using LanguageSpecificPrediction = std::vector<TokenId>;

namespace detail {

// Decodes one UTF-8 scalar starting at `pos`; returns the byte length, or 0
// when the sequence is malformed.
inline std::size_t utf8_scalar_length(std::string_view s, std::size_t pos,
                                      char32_t* out = nullptr) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  std::size_t len;
  char32_t cp;
  if (b0 < 0x80) {
    len = 1;
    cp = b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (pos + len > s.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    return 0;
  }
  if (out) *out = cp;
  return len;
}

inline bool is_single_scalar(std::string_view s) {
  return !s.empty() && utf8_scalar_length(s, 0) == s.size();
}

inline std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

inline bool is_ascii_letters(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) return false;
  }
  return true;
}

inline bool is_english_piece(std::string_view s) {
  if (!s.empty() && s.front() == '_') s.remove_prefix(1);
  return is_ascii_letters(s);
}

inline std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

enum class EncodeMode { kStrict, kPermissive };

/// Bilingual token inventory: a bijection between surfaces and ids, with a
/// language tag per id. Ids 0-3 are always blank, unk, sos and eos.
class Vocab {
 public:
  static constexpr TokenId kBlank = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kSos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kNumSpecials = 4;

  static constexpr std::string_view kBlankSurface = "<blank>";
  static constexpr std::string_view kUnkSurface = "<unk>";
  static constexpr std::string_view kSosSurface = "<sos>";
  static constexpr std::string_view kEosSurface = "<eos>";
  // Combined rendering of the start/end symbol; reserved, never an entry.
  static constexpr std::string_view kSosEosSurface = "<sos/eos>";

  struct Entry {
    std::string surface;
    Language tag;
  };

  Vocab() : Vocab(build({})) {}

  /// Specials at ids 0-3, then `entries` in order.
  static Vocab build(const std::vector<Entry>& entries) {
    Vocab v(0);
    v.add(std::string(kBlankSurface), Language::kSpecial);
    v.add(std::string(kUnkSurface), Language::kSpecial);
    v.add(std::string(kSosSurface), Language::kSpecial);
    v.add(std::string(kEosSurface), Language::kSpecial);
    for (const auto& e : entries) {
      if (is_reserved(e.surface)) {
        throw Error(ErrorKind::kReservedSurface, e.surface);
      }
      if (e.tag == Language::kSpecial) {
        throw Error(ErrorKind::kMalformedSurface,
                    "only reserved tokens may be Special: " + e.surface);
      }
      const bool ok = e.tag == Language::kMandarin
                          ? detail::is_single_scalar(e.surface)
                          : detail::is_english_piece(e.surface);
      if (!ok) {
        throw Error(ErrorKind::kMalformedSurface,
                    std::string(to_string(e.tag)) + " '" + e.surface + "'");
      }
      if (v.index_.count(e.surface)) {
        throw Error(ErrorKind::kDuplicateSurface, e.surface);
      }
      v.add(e.surface, e.tag);
    }
    return v;
  }

  static bool is_reserved(std::string_view surface) {
    return surface == kBlankSurface || surface == kUnkSurface ||
           surface == kSosSurface || surface == kEosSurface ||
           surface == kSosEosSurface;
  }

  std::size_t size() const { return surfaces_.size(); }

  bool valid(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < surfaces_.size();
  }

  Language classify(TokenId id) const {
    check(id);
    return tags_[static_cast<std::size_t>(id)];
  }

  bool is_special(TokenId id) const {
    return classify(id) == Language::kSpecial;
  }

  const std::string& surface(TokenId id) const {
    check(id);
    return surfaces_[static_cast<std::size_t>(id)];
  }

  /// English piece starting a word ("_" prefix).
  bool is_word_initial(TokenId id) const {
    return classify(id) == Language::kEnglish && surface(id).front() == '_';
  }

  std::optional<TokenId> find(std::string_view surface) const {
    auto it = index_.find(std::string(surface));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(std::string_view surface) const {
    auto found = find(surface);
    if (!found) throw Error(ErrorKind::kUnknownSurface, std::string(surface));
    return *found;
  }

  /// Non-special ids of one language, ascending.
  const std::vector<TokenId>& ids_of(Language lang) const {
    return lang == Language::kMandarin  ? mandarin_
           : lang == Language::kEnglish ? english_
                                        : specials_;
  }

  const std::vector<TokenId>& word_initial_ids() const {
    return word_initial_;
  }

  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    for (std::size_t i = kNumSpecials; i < surfaces_.size(); ++i) {
      out.push_back({surfaces_[i], tags_[i]});
    }
    return out;
  }

  Utterance encode(std::string_view text,
                   EncodeMode mode = EncodeMode::kStrict) const {
    Utterance out;
    for (auto piece : detail::split_whitespace(text)) {
      if (auto found = find(piece)) {
        out.push_back(*found);
      } else if (mode == EncodeMode::kPermissive) {
        out.push_back(kUnk);
      } else {
        throw Error(ErrorKind::kUnknownSurface, std::string(piece));
      }
    }
    return out;
  }

  std::string decode(const std::vector<TokenId>& tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += surface(tokens[i]);
    }
    return out;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.surfaces_ == b.surfaces_ && a.tags_ == b.tags_;
  }

 private:
  explicit Vocab(int) {}

  void add(std::string surface, Language tag) {
    const auto id = static_cast<TokenId>(surfaces_.size());
    index_.emplace(surface, id);
    if (tag == Language::kMandarin) mandarin_.push_back(id);
    if (tag == Language::kEnglish) english_.push_back(id);
    if (tag == Language::kSpecial) specials_.push_back(id);
    if (tag == Language::kEnglish && surface.front() == '_') {
      word_initial_.push_back(id);
    }
    surfaces_.push_back(std::move(surface));
    tags_.push_back(tag);
  }

  void check(TokenId id) const {
    if (!valid(id)) {
      throw Error(ErrorKind::kUnknownId, std::to_string(id) + " not in [0, " +
                                             std::to_string(size()) + ")");
    }
  }

  std::vector<std::string> surfaces_;
  std::vector<Language> tags_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<TokenId> mandarin_, english_, specials_, word_initial_;
};

/// Vocab file: one `<surface>\t<M|E>` per line; specials are implicit.
inline Vocab parse_vocab(std::istream& in) {
  std::vector<Vocab::Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw Error(ErrorKind::kParseError, "expected '<surface>\\t<tag>'",
                  line_no);
    }
    const std::string tag = line.substr(tab + 1);
    if (tag != "M" && tag != "E") {
      throw Error(ErrorKind::kParseError, "tag must be M or E, got '" + tag + "'",
                  line_no);
    }
    entries.push_back({line.substr(0, tab),
                       tag == "M" ? Language::kMandarin : Language::kEnglish});
  }
  try {
    return Vocab::build(entries);
  } catch (const Error& e) {
    // Point at the offending line where one exists.
    if (e.kind() == ErrorKind::kDuplicateSurface) {
      std::set<std::string> seen;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!seen.insert(entries[i].surface).second) {
          throw Error(e.kind(), entries[i].surface, i + 1);
        }
      }
    }
    throw;
  }
}

inline Vocab load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return parse_vocab(in);
}

inline void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  for (const auto& e : vocab.entries()) {
    out << e.surface << '\t' << (e.tag == Language::kMandarin ? 'M' : 'E')
        << '\n';
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

/// Deterministic stand-in inventory: `mandarin_units` CJK ideographs and
/// `english_units` letter pieces, roughly 60% of them word-initial.
inline Vocab synthetic_vocab(std::size_t mandarin_units,
                             std::size_t english_units, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0, 0x766f63);
  std::vector<Vocab::Entry> entries;

  constexpr char32_t kCjkFirst = 0x4E00;
  constexpr std::uint64_t kCjkSpan = 0x9FA5 - 0x4E00 + 1;
  if (mandarin_units > kCjkSpan) {
    throw Error(ErrorKind::kInvalidArgument, "too many Mandarin units");
  }
  std::set<char32_t> chars;
  while (chars.size() < mandarin_units) {
    chars.insert(kCjkFirst + static_cast<char32_t>(rng.below(kCjkSpan)));
  }
  for (char32_t c : chars) {
    entries.push_back({detail::utf8_encode(c), Language::kMandarin});
  }

  std::set<std::string> pieces;
  std::vector<std::string> ordered;
  const std::size_t word_initial = english_units == 0
                                       ? 0
                                       : std::max<std::size_t>(
                                             1, english_units * 3 / 5);
  while (ordered.size() < english_units) {
    const bool initial = ordered.size() < word_initial;
    const auto len = static_cast<std::size_t>(rng.between(initial ? 2 : 1, 6));
    std::string piece = initial ? "_" : "";
    for (std::size_t i = 0; i < len; ++i) {
      piece += static_cast<char>('a' + rng.below(26));
    }
    if (pieces.insert(piece).second) ordered.push_back(piece);
  }
  for (auto& p : ordered) entries.push_back({p, Language::kEnglish});
  return Vocab::build(entries);
}

}  // namespace csfusion
