#include <sstream>

#include <gtest/gtest.h>

#include "csfusion/vocab.hpp"
#include "test_util.hpp"

namespace csfusion {
namespace {

using L = Language;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kInvalidArgument;
}

TEST(Vocab, SpecialsPrecedeEntries) {
  const Vocab v = Vocab::build({{"你", L::kMandarin}, {"_hi", L::kEnglish}});
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("你"), 4);
  EXPECT_EQ(v.id("_hi"), 5);
  EXPECT_EQ(v.id("<blank>"), Vocab::kBlank);
  EXPECT_EQ(v.id("<unk>"), Vocab::kUnk);
  EXPECT_EQ(v.id("<sos>"), Vocab::kSos);
  EXPECT_EQ(v.id("<eos>"), Vocab::kEos);
}

TEST(Vocab, EmptyEntryListHoldsOnlySpecials) {
  const Vocab v = Vocab::build({});
  EXPECT_EQ(v.size(), 4u);
  for (TokenId t = 0; t < 4; ++t) EXPECT_EQ(v.classify(t), L::kSpecial);
  EXPECT_TRUE(v.ids_of(L::kMandarin).empty());
  EXPECT_TRUE(v.ids_of(L::kEnglish).empty());
}

TEST(Vocab, RejectsBadEntries) {
  EXPECT_EQ(kind_of([] { Vocab::build({{"你", L::kMandarin}, {"你", L::kMandarin}}); }),
            ErrorKind::kDuplicateSurface);
  EXPECT_EQ(kind_of([] { Vocab::build({{"你好", L::kMandarin}}); }),
            ErrorKind::kMalformedSurface);
  EXPECT_EQ(kind_of([] { Vocab::build({{"hi2", L::kEnglish}}); }),
            ErrorKind::kMalformedSurface);
  EXPECT_EQ(kind_of([] { Vocab::build({{"_", L::kEnglish}}); }),
            ErrorKind::kMalformedSurface);
  EXPECT_EQ(kind_of([] { Vocab::build({{"", L::kMandarin}}); }),
            ErrorKind::kMalformedSurface);
  for (const char* s : {"<blank>", "<unk>", "<sos>", "<eos>", "<sos/eos>"}) {
    EXPECT_EQ(kind_of([&] { Vocab::build({{s, L::kEnglish}}); }),
              ErrorKind::kReservedSurface)
        << s;
  }
  EXPECT_ANY_THROW(Vocab::build({{"x", L::kSpecial}}));
}

TEST(Vocab, Classify) {
  const Vocab v = Vocab::build({{"你", L::kMandarin}, {"_hi", L::kEnglish}});
  EXPECT_EQ(v.classify(1), L::kSpecial);
  EXPECT_EQ(v.classify(v.id("你")), L::kMandarin);
  EXPECT_EQ(v.classify(v.id("_hi")), L::kEnglish);
  EXPECT_EQ(kind_of([&] { v.classify(9999); }), ErrorKind::kUnknownId);
  EXPECT_EQ(kind_of([&] { v.classify(-1); }), ErrorKind::kUnknownId);
  EXPECT_EQ(kind_of([&] { v.surface(6); }), ErrorKind::kUnknownId);
}

TEST(Vocab, EncodeDecode) {
  const Vocab v = testing::example_vocab();
  const auto ids = v.encode("你 好");
  EXPECT_EQ(ids, (Utterance{v.id("你"), v.id("好")}));
  EXPECT_EQ(v.decode(ids), "你 好");
  EXPECT_EQ(kind_of([&] { v.encode("你 zzz"); }), ErrorKind::kUnknownSurface);
  EXPECT_EQ(v.encode("你 zzz", EncodeMode::kPermissive),
            (Utterance{v.id("你"), Vocab::kUnk}));
  EXPECT_TRUE(v.encode("").empty());
  EXPECT_EQ(v.encode("  你\t好  "), ids);
  EXPECT_EQ(v.decode({Vocab::kUnk}), "<unk>");
}

TEST(Vocab, WordInitialPieces) {
  const Vocab v = testing::example_vocab();
  EXPECT_TRUE(v.is_word_initial(v.id("_friend")));
  EXPECT_FALSE(v.is_word_initial(v.id("ly")));
  EXPECT_FALSE(v.is_word_initial(v.id("你")));
  for (TokenId t : v.word_initial_ids()) EXPECT_EQ(v.surface(t).front(), '_');
}

TEST(Vocab, ParseReportsLineNumbers) {
  std::istringstream good("你\tM\n_hi\tE\n\nly\tE\n");
  const Vocab v = parse_vocab(good);
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.id("ly"), 6);

  std::istringstream bad_tag("你\tM\n_hi\tX\n");
  try {
    parse_vocab(bad_tag);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParseError);
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream dup("你\tM\n好\tM\n你\tM\n");
  try {
    parse_vocab(dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDuplicateSurface);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Vocab, FileRoundTrip) {
  const auto dir = testing::temp_dir("vocab");
  const Vocab v = testing::example_vocab();
  save_vocab(v, (dir / "v.tsv").string());
  EXPECT_EQ(load_vocab((dir / "v.tsv").string()), v);
  EXPECT_EQ(kind_of([&] { load_vocab((dir / "missing.tsv").string()); }), ErrorKind::kIo);
  std::filesystem::remove_all(dir);
}

TEST(Vocab, SyntheticInventory) {
  const Vocab a = synthetic_vocab(200, 100, 7);
  EXPECT_EQ(a.size(), 304u);
  EXPECT_EQ(a.ids_of(L::kMandarin).size(), 200u);
  EXPECT_EQ(a.ids_of(L::kEnglish).size(), 100u);
  EXPECT_FALSE(a.word_initial_ids().empty());
  EXPECT_LT(a.word_initial_ids().size(), 100u);
  EXPECT_EQ(a, synthetic_vocab(200, 100, 7));
  EXPECT_FALSE(a == synthetic_vocab(200, 100, 8));
  // Every entry survives the build rules, so a save/parse cycle is lossless.
  std::ostringstream os;
  for (const auto& e : a.entries()) {
    os << e.surface << '\t' << (e.tag == L::kMandarin ? 'M' : 'E') << '\n';
  }
  std::istringstream is(os.str());
  EXPECT_EQ(parse_vocab(is), a);
}

TEST(Vocab, ReservedIdsStable) {
  for (const Vocab& v : {Vocab::build({}), testing::example_vocab(), synthetic_vocab(5, 5, 1)}) {
    EXPECT_EQ(v.surface(0), "<blank>");
    EXPECT_EQ(v.surface(1), "<unk>");
    EXPECT_EQ(v.surface(2), "<sos>");
    EXPECT_EQ(v.surface(3), "<eos>");
  }
}

}  // namespace
}  // namespace csfusion
