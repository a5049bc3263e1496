#include "toba/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "toba/common.hpp"
#include "toba/text.hpp"

namespace toba::tok {

namespace {

constexpr std::string_view kVocabMagic = "# toba-vocab v1";

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool is_word_char(char32_t c) {
  return (c >= U'a' && c <= U'z') || c == U'\'' || c == U'-';
}

struct Phone {
  std::size_t begin;
  std::size_t len;
  bool vowel;
};

std::vector<Phone> phones(std::string_view s) {
  std::vector<Phone> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (i + 1 < s.size()) {
      const std::string_view two = s.substr(i, 2);
      if (two == "ng" || two == "ny" || two == "kh" || two == "sy") {
        out.push_back({i, 2, false});
        i += 2;
        continue;
      }
    }
    out.push_back({i, 1, is_vowel(s[i])});
    ++i;
  }
  return out;
}

void syllabify_letters(std::string_view s, std::vector<std::string>& out) {
  const auto ph = phones(s);
  std::vector<std::size_t> nuclei;
  for (std::size_t i = 0; i < ph.size(); ++i)
    if (ph[i].vowel) nuclei.push_back(i);
  if (nuclei.empty()) {
    out.emplace_back(s);
    return;
  }
  // Phone index at which each syllable after the first starts.
  std::vector<std::size_t> starts;
  for (std::size_t n = 1; n < nuclei.size(); ++n) {
    const std::size_t prev = nuclei[n - 1];
    const std::size_t cur = nuclei[n];
    starts.push_back(cur - prev == 1 ? cur : cur - 1);
  }
  std::size_t from = 0;
  for (std::size_t st : starts) {
    const std::size_t byte = ph[st].begin;
    out.emplace_back(s.substr(from, byte - from));
    from = byte;
  }
  out.emplace_back(s.substr(from));
}

}  // namespace

std::vector<std::string> syllabify(std::string_view word) {
  if (word.empty()) throw EmptyInput("syllabify: empty word");
  std::vector<std::string> out;
  std::size_t run = 0;
  for (std::size_t i = 0; i <= word.size(); ++i) {
    const bool end = i == word.size();
    if (!end && word[i] >= 'a' && word[i] <= 'z') continue;
    if (!end && word[i] != '\'' && word[i] != '-')
      throw std::invalid_argument("syllabify: character outside [a-z'-]");
    if (i > run) syllabify_letters(word.substr(run, i - run), out);
    if (!end) out.emplace_back(1, word[i]);
    run = i + 1;
  }
  return out;
}

std::string normalize(std::string_view input) {
  const std::string lowered = text::lowercase(text::nfc(input));
  std::string out;
  out.reserve(lowered.size());
  bool pending_space = false;
  for (char32_t cp : text::decode_utf8(lowered)) {
    if (text::is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    text::append_utf8(out, cp);
  }
  return out;
}

std::vector<std::string> segment_word(std::string_view word) {
  std::vector<std::string> out;
  std::string run;
  auto flush = [&] {
    if (run.empty()) return;
    auto syl = syllabify(run);
    out.insert(out.end(), std::make_move_iterator(syl.begin()),
               std::make_move_iterator(syl.end()));
    run.clear();
  };
  for (char32_t cp : text::decode_utf8(word)) {
    if (is_word_char(cp)) {
      run.push_back(static_cast<char>(cp));
    } else {
      flush();
      std::string unit;
      text::append_utf8(unit, cp);
      out.push_back(std::move(unit));
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// SyllableVocab

SyllableVocab::SyllableVocab() {
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    units_.emplace_back(kSpecialNames[i]);
    freq_.push_back(0);
    index_.emplace(units_.back(), static_cast<TokenId>(i));
  }
}

SyllableVocab SyllableVocab::from_units(
    std::vector<std::pair<std::string, std::uint64_t>> units) {
  SyllableVocab v;
  for (auto& [unit, freq] : units) {
    if (unit.empty() || v.index_.contains(unit))
      throw ConfigError("vocabulary unit empty or duplicated: '" + unit + "'");
    v.index_.emplace(unit, static_cast<TokenId>(v.units_.size()));
    v.units_.push_back(std::move(unit));
    v.freq_.push_back(freq);
  }
  return v;
}

std::optional<TokenId> SyllableVocab::find(std::string_view unit) const {
  auto it = index_.find(std::string(unit));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId SyllableVocab::id_or_unk(std::string_view unit) const {
  return find(unit).value_or(kUnkId);
}

const std::string& SyllableVocab::unit(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= units_.size())
    throw OutOfRange("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(units_.size()));
  return units_[static_cast<std::size_t>(id)];
}

std::uint64_t SyllableVocab::frequency(TokenId id) const {
  unit(id);
  return freq_[static_cast<std::size_t>(id)];
}

void SyllableVocab::save(std::ostream& os) const {
  os << kVocabMagic << "\tspecials=";
  for (std::size_t i = 0; i < kNumSpecials; ++i)
    os << (i ? "," : "") << kSpecialNames[i];
  os << '\n';
  for (std::size_t i = kNumSpecials; i < units_.size(); ++i)
    os << units_[i] << '\t' << freq_[i] << '\n';
}

SyllableVocab SyllableVocab::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty vocabulary file", 1);
  std::string expected(kVocabMagic);
  expected += "\tspecials=";
  for (std::size_t i = 0; i < kNumSpecials; ++i)
    expected += std::string(i ? "," : "") + std::string(kSpecialNames[i]);
  if (line != expected) throw ParseError("bad vocabulary header", 1);

  std::vector<std::pair<std::string, std::uint64_t>> units;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0)
      throw ParseError("expected unit<TAB>frequency", lineno);
    std::uint64_t freq = 0;
    try {
      std::size_t used = 0;
      freq = std::stoull(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("bad frequency", lineno);
    }
    units.emplace_back(line.substr(0, tab), freq);
  }
  try {
    return from_units(std::move(units));
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), lineno);
  }
}

void SyllableVocab::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  save(os);
  if (!os) throw IoError("write failed: " + path);
}

SyllableVocab SyllableVocab::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return load(is);
}

// ---------------------------------------------------------------------------
// Counting and building

namespace {

void count_doc(const std::string& doc,
               std::unordered_map<std::string, std::uint64_t>& counts) {
  const std::string norm = normalize(doc);
  std::size_t pos = 0;
  while (pos < norm.size()) {
    std::size_t sp = norm.find(' ', pos);
    if (sp == std::string::npos) sp = norm.size();
    for (auto& u : segment_word(std::string_view(norm).substr(pos, sp - pos)))
      ++counts[u];
    pos = sp + 1;
  }
}

}  // namespace

namespace serial {
UnitCounts count_units(std::span<const std::string> docs) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& d : docs) count_doc(d, counts);
  return UnitCounts(counts.begin(), counts.end());
}
}  // namespace serial

namespace parallel {
UnitCounts count_units(std::span<const std::string> docs) {
  UnitCounts merged;
  const auto n = static_cast<std::int64_t>(docs.size());
#pragma omp parallel
  {
    std::unordered_map<std::string, std::uint64_t> local;
#pragma omp for schedule(dynamic, 16) nowait
    for (std::int64_t i = 0; i < n; ++i)
      count_doc(docs[static_cast<std::size_t>(i)], local);
    // Addition commutes, so the merge order does not affect the result.
#pragma omp critical(toba_count_merge)
    for (auto& [u, c] : local) merged[u] += c;
  }
  return merged;
}
}  // namespace parallel

SyllableVocab build_vocab(std::span<const std::string> corpus,
                          std::uint64_t min_count) {
  if (min_count < 1) throw ConfigError("build_vocab: min_count must be >= 1");
  const UnitCounts counts = parallel::count_units(corpus);
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [u, c] : counts)
    if (c >= min_count) kept.emplace_back(u, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return SyllableVocab::from_units(std::move(kept));
}

TokenSequence encode(std::string_view input, const SyllableVocab& vocab) {
  const std::string norm = normalize(input);
  TokenSequence ids;
  std::size_t pos = 0;
  while (pos < norm.size()) {
    std::size_t sp = norm.find(' ', pos);
    if (sp == std::string::npos) sp = norm.size();
    if (!ids.empty()) ids.push_back(kSpId);
    for (const auto& u : segment_word(std::string_view(norm).substr(pos, sp - pos)))
      ids.push_back(vocab.id_or_unk(u));
    pos = sp + 1;
  }
  return ids;
}

std::string decode(std::span<const TokenId> ids, const SyllableVocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& u = vocab.unit(id);
    switch (id) {
      case kSpId: out.push_back(' '); break;
      case kUnkId: out += kUnkGlyph; break;
      case kPadId:
      case kBosId:
      case kEosId: break;
      default: out += u;
    }
  }
  return out;
}

}  // namespace toba::tok
