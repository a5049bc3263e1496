#pragma once

// Rule-based syllabic tokenizer.
//
// Words are split into syllables by onset maximization limited to a single
// consonant: in every intervocalic consonant cluster the boundary falls
// before the last consonant, and each vowel is its own nucleus. The digraphs
// "ng", "ny", "kh" and "sy" count as one consonant. Characters outside
// [a-z'-] become single-character units of their own.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace toba::tok {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kSpId = 4;
inline constexpr std::size_t kNumSpecials = 5;
inline constexpr std::array<std::string_view, kNumSpecials> kSpecialNames = {
    "<pad>", "<unk>", "<bos>", "<eos>", "<sp>"};
inline constexpr std::string_view kUnkGlyph = "\xEF\xBF\xBD";  // U+FFFD

// Splits a lowercase word over [a-z'-] into syllables. Apostrophes and
// hyphens are emitted as units of their own. Throws EmptyInput on "".
std::vector<std::string> syllabify(std::string_view word);

// NFC, lowercase, whitespace runs collapsed to one space, ends trimmed.
std::string normalize(std::string_view text);

// Units of one normalized, whitespace-free word.
std::vector<std::string> segment_word(std::string_view word);

class SyllableVocab {
 public:
  // Specials only.
  SyllableVocab();

  // Non-special units in id order, with their corpus frequencies.
  static SyllableVocab from_units(
      std::vector<std::pair<std::string, std::uint64_t>> units);

  std::size_t size() const noexcept { return units_.size(); }
  std::optional<TokenId> find(std::string_view unit) const;
  TokenId id_or_unk(std::string_view unit) const;
  const std::string& unit(TokenId id) const;
  std::uint64_t frequency(TokenId id) const;

  // "# toba-vocab v1" header followed by "unit<TAB>frequency" lines.
  void save(std::ostream& os) const;
  static SyllableVocab load(std::istream& is);
  void save_file(const std::string& path) const;
  static SyllableVocab load_file(const std::string& path);

  friend bool operator==(const SyllableVocab& a, const SyllableVocab& b) {
    return a.units_ == b.units_ && a.freq_ == b.freq_;
  }

 private:
  std::vector<std::string> units_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, TokenId> index_;
};

using UnitCounts = std::map<std::string, std::uint64_t>;

namespace serial {
UnitCounts count_units(std::span<const std::string> docs);
}
namespace parallel {
UnitCounts count_units(std::span<const std::string> docs);
}

// Specials plus every unit with frequency >= min_count, ordered by
// (frequency desc, bytes asc). Throws ConfigError if min_count < 1.
SyllableVocab build_vocab(std::span<const std::string> corpus,
                          std::uint64_t min_count);

TokenSequence encode(std::string_view text, const SyllableVocab& vocab);

// Throws OutOfRange for ids outside the vocabulary.
std::string decode(std::span<const TokenId> ids, const SyllableVocab& vocab);

}  // namespace toba::tok
