#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <numeric>
#include <sstream>

#include "toba/common.hpp"
#include "toba/rng.hpp"
#include "toba/tokenizer.hpp"

using namespace toba;
using namespace toba::tok;

namespace {

std::string join(const std::vector<std::string>& v) {
  return std::accumulate(v.begin(), v.end(), std::string{});
}

std::vector<std::string> fixture_lines() {
  std::vector<std::string> lines;
  for (const char* name : {"indonesia.txt", "batak.txt", "minang.txt"}) {
    std::ifstream is(std::string(TOBA_FIXTURE_DIR) + "/corpus/" + name);
    REQUIRE(is);
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

TEST_CASE("syllabify follows the V.CV and VC.CV rules") {
  CHECK(syllabify("makan") == std::vector<std::string>{"ma", "kan"});
  CHECK(syllabify("a") == std::vector<std::string>{"a"});
  CHECK(syllabify("horas") == std::vector<std::string>{"ho", "ras"});
  CHECK(syllabify("mama") == std::vector<std::string>{"ma", "ma"});
  CHECK(syllabify("tanda") == std::vector<std::string>{"tan", "da"});
  CHECK(syllabify("strategi") == std::vector<std::string>{"stra", "te", "gi"});
  CHECK(syllabify("main") == std::vector<std::string>{"ma", "in"});
}

TEST_CASE("syllabify treats ng, ny, kh, sy as one consonant") {
  CHECK(syllabify("bangun") == std::vector<std::string>{"ba", "ngun"});
  CHECK(syllabify("angka") == std::vector<std::string>{"ang", "ka"});
  CHECK(syllabify("tanya") == std::vector<std::string>{"ta", "nya"});
  CHECK(syllabify("akhir") == std::vector<std::string>{"a", "khir"});
  CHECK(syllabify("masyarakat") ==
        std::vector<std::string>{"ma", "sya", "ra", "kat"});
}

TEST_CASE("syllabify edge cases") {
  CHECK_THROWS_AS(syllabify(""), EmptyInput);
  CHECK(syllabify("hmm") == std::vector<std::string>{"hmm"});
  CHECK(syllabify("anak-anak") ==
        std::vector<std::string>{"a", "nak", "-", "a", "nak"});
  CHECK(syllabify("ma'af") == std::vector<std::string>{"ma", "'", "af"});
  CHECK_THROWS(syllabify("Makan"));
}

TEST_CASE("syllabify concatenation property on random words") {
  Rng rng(7);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  for (int n = 0; n < 2000; ++n) {
    std::string w;
    const auto len = 1 + rng.below(12);
    for (std::size_t i = 0; i < len; ++i) w.push_back(alphabet[rng.below(26)]);
    const auto syl = syllabify(w);
    REQUIRE(join(syl) == w);
    bool word_has_vowel = w.find_first_of("aeiou") != std::string::npos;
    for (const auto& s : syl) {
      if (word_has_vowel) CHECK(s.find_first_of("aeiou") != std::string::npos);
    }
    if (!word_has_vowel) CHECK(syl.size() == 1);
  }
}

TEST_CASE("normalize applies NFC, lowercase and whitespace collapsing") {
  CHECK(normalize("  Horas   Bah\t\nTulang ") == "horas bah tulang");
  CHECK(normalize("Cafe\xCC\x81") == "caf\xC3\xA9");
  CHECK(normalize("") == "");
}

TEST_CASE("build_vocab examples") {
  std::vector<std::string> corpus = {"mama mama"};
  auto v = build_vocab(corpus, 1);
  REQUIRE(v.size() == kNumSpecials + 1);
  CHECK(v.unit(static_cast<TokenId>(kNumSpecials)) == "ma");
  CHECK(v.frequency(static_cast<TokenId>(kNumSpecials)) == 4);

  CHECK(build_vocab(std::vector<std::string>{}, 1).size() == kNumSpecials);
  CHECK(build_vocab(std::vector<std::string>{"aba"}, 3).size() == kNumSpecials);
  CHECK_THROWS_AS(build_vocab(corpus, 0), ConfigError);
}

TEST_CASE("build_vocab orders by frequency then bytes") {
  std::vector<std::string> corpus = {"ba ba ba ka ka da ma"};
  auto v = build_vocab(corpus, 1);
  REQUIRE(v.size() == kNumSpecials + 4);
  CHECK(v.unit(5) == "ba");
  CHECK(v.unit(6) == "ka");
  CHECK(v.unit(7) == "da");
  CHECK(v.unit(8) == "ma");
}

TEST_CASE("specials occupy the lowest ids") {
  SyllableVocab v;
  for (std::size_t i = 0; i < kNumSpecials; ++i)
    CHECK(v.unit(static_cast<TokenId>(i)) == kSpecialNames[i]);
  CHECK(v.find("<sp>") == kSpId);
}

TEST_CASE("serial and parallel unit counting agree") {
  const auto lines = fixture_lines();
  CHECK(serial::count_units(lines) == parallel::count_units(lines));
}

TEST_CASE("encode and decode examples") {
  auto v = build_vocab(std::vector<std::string>{"mama kan"}, 1);
  CHECK(encode("", v).empty());
  const TokenId ma = *v.find("ma");
  CHECK(encode("mama", v) == TokenSequence{ma, ma});
  for (TokenId id : encode("xyzzy", v)) CHECK(id == kUnkId);

  CHECK(decode(TokenSequence{}, v) == "");
  CHECK(decode(encode("ma kan", v), v) == "ma kan");
  CHECK(decode(TokenSequence{kUnkId}, v) == "\xEF\xBF\xBD");
  CHECK_THROWS_AS(decode(TokenSequence{static_cast<TokenId>(v.size())}, v),
                  OutOfRange);
  CHECK_THROWS_AS(decode(TokenSequence{-1}, v), OutOfRange);
}

TEST_CASE("round trip on the fixture corpus") {
  const auto lines = fixture_lines();
  auto v = build_vocab(lines, 1);
  for (const auto& line : lines) CHECK(decode(encode(line, v), v) == normalize(line));
}

TEST_CASE("vocabulary file is deterministic and reloads exactly") {
  const auto lines = fixture_lines();
  std::ostringstream a, b;
  build_vocab(lines, 1).save(a);
  build_vocab(lines, 1).save(b);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  auto reloaded = SyllableVocab::load(in);
  CHECK(reloaded == build_vocab(lines, 1));
  std::ostringstream c;
  reloaded.save(c);
  CHECK(c.str() == a.str());
}

TEST_CASE("vocabulary loader rejects malformed files") {
  std::istringstream bad_header("not a vocab\n");
  CHECK_THROWS_AS(SyllableVocab::load(bad_header), ParseError);
  std::ostringstream good;
  SyllableVocab().save(good);
  std::istringstream bad_line(good.str() + "ma\tx\n");
  CHECK_THROWS_AS(SyllableVocab::load(bad_line), ParseError);
}

TEST_CASE("vocabulary growth is sublinear on the fixture corpus") {
  const auto lines = fixture_lines();
  std::vector<std::string> half(lines.begin(),
                                lines.begin() + static_cast<std::ptrdiff_t>(lines.size() / 2));
  const auto v1 = build_vocab(half, 1).size() - kNumSpecials;
  const auto v2 = build_vocab(lines, 1).size() - kNumSpecials;
  MESSAGE("units on 1x corpus: " << v1 << ", on 2x corpus: " << v2);
  CHECK(static_cast<double>(v2) <= 1.5 * static_cast<double>(v1));
}
