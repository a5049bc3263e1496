#include "toba/corpus.hpp"

#include <unicode/regex.h>
#include <unicode/uscript.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "toba/common.hpp"
#include "toba/rng.hpp"
#include "toba/text.hpp"

namespace toba::corpus {

namespace fs = std::filesystem;

namespace {

std::size_t count_code_points(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) n += (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  return n;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Sanitize

std::string collapse_whitespace(std::string_view s) {
  const auto cps = text::decode_utf8(s);
  std::string out;
  std::string line;
  bool pending_space = false;
  auto flush_line = [&] {
    if (line.empty()) return;
    if (!out.empty()) out.push_back('\n');
    out += line;
    line.clear();
  };
  for (char32_t cp : cps) {
    if (cp == U'\n') {
      flush_line();
      pending_space = false;
    } else if (text::is_whitespace(cp)) {
      pending_space = !line.empty();
    } else {
      if (pending_space) line.push_back(' ');
      pending_space = false;
      text::append_utf8(line, cp);
    }
  }
  flush_line();
  return out;
}

std::string normalize_unicode(std::string_view s) {
  if (auto bad = text::find_invalid_utf8(s))
    throw EncodingError("invalid UTF-8", *bad);
  std::string stripped;
  stripped.reserve(s.size());
  for (char32_t cp : text::decode_utf8(s))
    if (!text::is_control(cp) || cp == U'\n' || cp == U'\t')
      text::append_utf8(stripped, cp);
  return collapse_whitespace(text::nfc(stripped));
}

// ---------------------------------------------------------------------------
// Trim

const std::vector<TrimRule>& default_trim_rules() {
  static const std::vector<TrimRule> rules = {
      {"url", R"((?:https?|ftp)://\S+|\bwww\.\S+)"},
      {"ref_tag", R"((?s)<ref[^>]*/>|<ref[^>]*>.*?</ref>)"},
      {"html_tag", R"(</?[A-Za-z][^<>]*>)"},
      {"wiki_template", R"(\{\{[^{}]*\}\})"},
      {"wiki_link_open", R"(\[\[(?:[^\[\]|]*\|)?)"},
      {"wiki_link_close", R"(\]\])"},
      {"citation", R"((?i)\[(?:\d+(?:\s*[,\-\x{2013}]\s*\d+)*|citation needed|butuh rujukan|rujukan\?)\])"},
      {"wiki_emphasis", R"('{2,})"},
      {"heading_marks", R"((?m)^[ \t]*={2,}[ \t]*|[ \t]*={2,}[ \t]*$)"},
      {"page_footer", R"((?mi)^[ \t]*(?:halaman|page|hal\.)[ \t]+\d+(?:[ \t]+(?:dari|of)[ \t]+\d+)?[ \t]*$)"},
      {"copyright_line", R"((?mi)^[ \t]*(?:\x{00A9}|\(c\)|hak cipta|copyright)\b.*$)"},
  };
  return rules;
}

struct Trimmer::Compiled {
  std::vector<std::unique_ptr<icu::RegexPattern>> patterns;
};

Trimmer::Trimmer(std::vector<TrimRule> rules)
    : rules_(std::move(rules)), compiled_(std::make_unique<Compiled>()) {
  for (const auto& r : rules_) {
    UErrorCode status = U_ZERO_ERROR;
    UParseError pe;
    std::unique_ptr<icu::RegexPattern> p(icu::RegexPattern::compile(
        icu::UnicodeString::fromUTF8(r.pattern), 0, pe, status));
    if (U_FAILURE(status))
      throw ConfigError("trim rule \"" + r.name + "\" does not compile: " +
                        u_errorName(status));
    compiled_->patterns.push_back(std::move(p));
  }
}

Trimmer::~Trimmer() = default;
Trimmer::Trimmer(Trimmer&&) noexcept = default;
Trimmer& Trimmer::operator=(Trimmer&&) noexcept = default;

std::string Trimmer::apply(std::string_view text) const {
  std::string cur(text);
  for (int pass = 0; pass < 16; ++pass) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(cur.data(), static_cast<int32_t>(cur.size())));
    for (const auto& p : compiled_->patterns) {
      UErrorCode status = U_ZERO_ERROR;
      std::unique_ptr<icu::RegexMatcher> m(p->matcher(u, status));
      if (U_FAILURE(status)) throw Error("regex matcher failed");
      u = m->replaceAll(icu::UnicodeString(), status);
      if (U_FAILURE(status)) throw Error("regex replace failed");
    }
    std::string next;
    u.toUTF8String(next);
    next = collapse_whitespace(next);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

std::string regex_trim(std::string_view text) {
  static const Trimmer t;
  return t.apply(text);
}

std::string regex_trim(std::string_view text, const Trimmer& trimmer) {
  return trimmer.apply(text);
}

// ---------------------------------------------------------------------------
// Gate

const char* reason_name(GateReason r) {
  switch (r) {
    case GateReason::too_short: return "too_short";
    case GateReason::symbol_ratio: return "symbol_ratio";
    case GateReason::alpha_ratio: return "alpha_ratio";
    case GateReason::char_dominance: return "char_dominance";
    case GateReason::word_length: return "word_length";
    case GateReason::language: return "language";
  }
  return "unknown";
}

GateResult heuristic_gate(std::string_view s, const GateConfig& cfg,
                          const std::optional<std::string>& lang_hint) {
  GateResult g;
  const auto cps = text::decode_utf8(s);
  g.length = cps.size();
  std::size_t alpha = 0, space = 0, latin = 0, scripted = 0;
  std::size_t words = 0, word_chars = 0;
  std::unordered_map<char32_t, std::size_t> other;
  bool in_word = false;
  for (char32_t cp : cps) {
    if (text::is_whitespace(cp)) {
      ++space;
      in_word = false;
      continue;
    }
    if (!in_word) ++words;
    in_word = true;
    ++word_chars;
    if (text::is_alphabetic(cp)) {
      ++alpha;
      UErrorCode status = U_ZERO_ERROR;
      const UScriptCode sc = uscript_getScript(static_cast<UChar32>(cp), &status);
      if (U_SUCCESS(status) && sc != USCRIPT_COMMON && sc != USCRIPT_INHERITED) {
        ++scripted;
        latin += sc == USCRIPT_LATIN;
      }
    } else {
      ++other[cp];
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(g.length, 1));
  g.alpha_ratio = static_cast<double>(alpha) / n;
  g.symbol_ratio = static_cast<double>(g.length - alpha - space) / n;
  g.mean_word_length =
      words ? static_cast<double>(word_chars) / static_cast<double>(words) : 0.0;
  std::size_t top = 0;
  for (const auto& [cp, c] : other) top = std::max(top, c);
  g.max_char_share = static_cast<double>(top) / n;
  g.latin_share = scripted ? static_cast<double>(latin) / static_cast<double>(scripted) : 1.0;

  auto& r = g.reasons;
  if (g.length < cfg.min_length) r.push_back(GateReason::too_short);
  if (g.symbol_ratio > cfg.max_symbol_ratio) r.push_back(GateReason::symbol_ratio);
  if (g.alpha_ratio < cfg.min_alpha_ratio) r.push_back(GateReason::alpha_ratio);
  if (g.max_char_share > cfg.max_char_share) r.push_back(GateReason::char_dominance);
  if (g.mean_word_length < cfg.min_mean_word_length ||
      g.mean_word_length > cfg.max_mean_word_length)
    r.push_back(GateReason::word_length);
  bool lang_ok = g.latin_share >= cfg.min_latin_share;
  if (lang_hint && !cfg.lang_allowlist.empty())
    lang_ok = lang_ok && std::find(cfg.lang_allowlist.begin(), cfg.lang_allowlist.end(),
                                   *lang_hint) != cfg.lang_allowlist.end();
  if (!lang_ok) r.push_back(GateReason::language);
  g.pass = r.empty();
  return g;
}

// ---------------------------------------------------------------------------
// Blacklist

std::vector<std::string> line_ngrams(std::string_view line, std::size_t n) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) words.push_back(line.substr(start, i - start));
  }
  std::vector<std::string> out;
  if (n == 0 || words.size() < n) return out;
  for (std::size_t k = 0; k + n <= words.size(); ++k) {
    std::string g(words[k]);
    for (std::size_t j = 1; j < n; ++j) {
      g.push_back(' ');
      g.append(words[k + j]);
    }
    out.push_back(std::move(g));
  }
  return out;
}

Blacklist build_blacklist(std::span<const std::string> docs,
                          const BlacklistConfig& cfg) {
  std::vector<std::vector<std::string>> per_doc(docs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t d = 0; d < static_cast<std::ptrdiff_t>(docs.size()); ++d) {
    std::vector<std::string> grams;
    for (auto line : split_lines(docs[static_cast<std::size_t>(d)]))
      for (auto& g : line_ngrams(line, cfg.ngram)) grams.push_back(std::move(g));
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    per_doc[static_cast<std::size_t>(d)] = std::move(grams);
  }
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& grams : per_doc)
    for (const auto& g : grams) ++df[g];
  const double limit = std::max(static_cast<double>(cfg.min_df),
                                cfg.min_df_fraction * static_cast<double>(docs.size()));
  Blacklist bl;
  for (const auto& [g, c] : df)
    if (static_cast<double>(c) > limit) bl.insert(g);
  return bl;
}

BlacklistApplied apply_blacklist(std::string_view doc, const Blacklist& bl,
                                 std::size_t ngram) {
  BlacklistApplied out;
  if (bl.empty()) {
    out.text = std::string(doc);
    return out;
  }
  for (auto line : split_lines(doc)) {
    bool hit = false;
    for (const auto& g : line_ngrams(line, ngram))
      if (bl.count(g)) {
        hit = true;
        break;
      }
    if (hit) {
      ++out.lines_removed;
      continue;
    }
    if (!out.text.empty()) out.text.push_back('\n');
    out.text.append(line);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MinHash

namespace {

constexpr std::uint64_t kMersenne61 = (1ULL << 61) - 1;

std::uint64_t mod61(unsigned __int128 x) {
  std::uint64_t r = static_cast<std::uint64_t>(x & kMersenne61) +
                    static_cast<std::uint64_t>(x >> 61);
  r = (r & kMersenne61) + (r >> 61);
  return r >= kMersenne61 ? r - kMersenne61 : r;
}

struct Permutations {
  std::vector<std::uint64_t> a, b;
};

Permutations make_permutations(const MinHashParams& p) {
  Permutations perm;
  Rng rng(p.seed, 11);
  for (std::size_t i = 0; i < p.num_perm; ++i) {
    perm.a.push_back(1 + rng.below(kMersenne61 - 1));
    perm.b.push_back(rng.below(kMersenne61));
  }
  return perm;
}

void check_params(const MinHashParams& p) {
  if (p.num_perm < 1) throw ConfigError("minhash: num_perm must be >= 1");
  if (p.shingle_width < 1) throw ConfigError("minhash: shingle_width must be >= 1");
}

MinHashSignature signature_with(std::span<const std::uint64_t> shingles,
                                const MinHashParams& p, const Permutations& perm) {
  MinHashSignature s;
  s.params = p;
  s.values.assign(p.num_perm, kMersenne61);
  for (std::uint64_t h : shingles) {
    const std::uint64_t x = mod61(h);
    for (std::size_t i = 0; i < p.num_perm; ++i) {
      const std::uint64_t v =
          mod61(static_cast<unsigned __int128>(perm.a[i]) * x + perm.b[i]);
      if (v < s.values[i]) s.values[i] = v;
    }
  }
  return s;
}

}  // namespace

std::vector<std::uint64_t> shingle_hashes(std::string_view s, std::size_t w) {
  if (w < 1) throw ConfigError("shingle width must be >= 1");
  // Byte offsets of each code point start, plus the end.
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) starts.push_back(i);
  starts.push_back(s.size());
  const std::size_t n = starts.size() - 1;
  std::vector<std::uint64_t> out;
  if (n < w) {
    out.push_back(splitmix64(fnv1a(s)));
    return out;
  }
  out.reserve(n - w + 1);
  for (std::size_t k = 0; k + w <= n; ++k)
    out.push_back(splitmix64(fnv1a(s.substr(starts[k], starts[k + w] - starts[k]))));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MinHashSignature minhash_from_hashes(std::span<const std::uint64_t> shingles,
                                     const MinHashParams& p) {
  check_params(p);
  return signature_with(shingles, p, make_permutations(p));
}

MinHashSignature minhash_signature(std::string_view text, const MinHashParams& p) {
  check_params(p);
  const auto sh = shingle_hashes(text, p.shingle_width);
  return signature_with(sh, p, make_permutations(p));
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (!(a.params == b.params) || a.values.size() != b.values.size())
    throw ConfigError("minhash signatures built with different parameters");
  if (a.values.empty()) return 0.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) agree += a.values[i] == b.values[i];
  return static_cast<double>(agree) / static_cast<double>(a.values.size());
}

double exact_jaccard(std::string_view a, std::string_view b, std::size_t w) {
  auto grams = [w](std::string_view s) {
    const auto cps = text::code_points(s);
    std::set<std::string> out;
    if (cps.size() < w) {
      out.insert(std::string(s));
      return out;
    }
    for (std::size_t k = 0; k + w <= cps.size(); ++k) {
      std::string g;
      for (std::size_t j = 0; j < w; ++j) g += cps[k + j];
      out.insert(std::move(g));
    }
    return out;
  };
  const auto A = grams(a), B = grams(b);
  std::size_t inter = 0;
  for (const auto& g : A) inter += B.count(g);
  const std::size_t uni = A.size() + B.size() - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

namespace serial {
std::vector<MinHashSignature> signatures(std::span<const std::string> texts,
                                         const MinHashParams& p) {
  check_params(p);
  const auto perm = make_permutations(p);
  std::vector<MinHashSignature> out;
  out.reserve(texts.size());
  for (const auto& t : texts)
    out.push_back(signature_with(shingle_hashes(t, p.shingle_width), p, perm));
  return out;
}
}  // namespace serial

namespace parallel {
std::vector<MinHashSignature> signatures(std::span<const std::string> texts,
                                         const MinHashParams& p) {
  check_params(p);
  const auto perm = make_permutations(p);
  std::vector<MinHashSignature> out(texts.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(texts.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = signature_with(shingle_hashes(texts[k], p.shingle_width), p, perm);
  }
  return out;
}
}  // namespace parallel

// ---------------------------------------------------------------------------
// LSH

double lsh_collision_probability(double j, std::size_t bands, std::size_t rows) {
  return 1.0 - std::pow(1.0 - std::pow(j, static_cast<double>(rows)),
                        static_cast<double>(bands));
}

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  // `less` orders roots so the smaller one wins.
  template <typename Less>
  void unite(std::size_t a, std::size_t b, Less less) {
    a = find(a), b = find(b);
    if (a == b) return;
    if (less(b, a)) std::swap(a, b);
    parent[b] = a;
  }
};

}  // namespace

DedupResult lsh_dedup(std::span<const std::uint64_t> ids,
                      std::span<const MinHashSignature> sigs,
                      const LshConfig& cfg) {
  if (ids.size() != sigs.size())
    throw ShapeError("lsh_dedup: ids and signatures differ in length");
  DedupResult res;
  res.duplicate_of.assign(ids.size(), std::nullopt);
  if (sigs.empty()) return res;
  const MinHashParams& p = sigs.front().params;
  for (const auto& s : sigs)
    if (!(s.params == p) || s.values.size() != p.num_perm)
      throw ConfigError("lsh_dedup: signatures built with different parameters");
  if (cfg.bands < 1 || cfg.rows < 1 || cfg.bands * cfg.rows > p.num_perm)
    throw ConfigError("lsh_dedup: bands * rows must be between 1 and num_perm");

  // Visit documents in id order so buckets and unions are schedule free.
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

  std::set<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t band = 0; band < cfg.bands; ++band) {
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
    for (std::size_t idx : order) {
      std::uint64_t h = kFnvOffset ^ band;
      for (std::size_t r = 0; r < cfg.rows; ++r) {
        h ^= sigs[idx].values[band * cfg.rows + r];
        h = splitmix64(h);
      }
      auto& bucket = buckets[h];
      for (std::size_t other : bucket)
        candidates.emplace(std::min(other, idx), std::max(other, idx));
      bucket.push_back(idx);
    }
  }
  res.candidate_pairs = candidates.size();

  UnionFind uf(ids.size());
  auto less = [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; };
  for (auto [a, b] : candidates) {
    if (estimate_jaccard(sigs[a], sigs[b]) > cfg.threshold) {
      ++res.linked_pairs;
      uf.unite(a, b, less);
    }
  }
  std::map<std::uint64_t, DuplicateCluster> clusters;
  for (std::size_t idx : order) {
    const std::size_t root = uf.find(idx);
    if (root == idx) continue;
    res.duplicate_of[idx] = ids[root];
    auto& c = clusters[ids[root]];
    c.survivor = ids[root];
    c.duplicates.push_back(ids[idx]);
  }
  for (auto& [id, c] : clusters) res.clusters.push_back(std::move(c));
  return res;
}

// ---------------------------------------------------------------------------
// Pipeline config

void PipelineConfig::validate() const {
  for (const auto& s : disabled_stages) {
    if (std::find(std::begin(kStageNames), std::end(kStageNames), s) == std::end(kStageNames))
      throw ConfigError("unknown pipeline stage \"" + s + "\"");
    if (s == "sanitize") throw ConfigError("the sanitize stage cannot be disabled");
  }
  if (gate.min_mean_word_length > gate.max_mean_word_length)
    throw ConfigError("gate: min_mean_word_length exceeds max_mean_word_length");
  if (blacklist.ngram < 1) throw ConfigError("blacklist: ngram must be >= 1");
  check_params(minhash);
  if (lsh.bands < 1 || lsh.rows < 1 || lsh.bands * lsh.rows > minhash.num_perm)
    throw ConfigError("lsh: bands * rows must be between 1 and num_perm");
  if (!(lsh.threshold >= 0.0 && lsh.threshold <= 1.0))
    throw ConfigError("lsh: threshold must lie in [0, 1]");
  Trimmer check(trim_rules);
}

bool PipelineConfig::enabled(std::string_view stage) const {
  return !disabled_stages.count(std::string(stage));
}

json to_json(const PipelineConfig& c) {
  json rules = json::array();
  for (const auto& r : c.trim_rules) rules.push_back({{"name", r.name}, {"pattern", r.pattern}});
  return json{
      {"disabled_stages", c.disabled_stages},
      {"trim_rules", rules},
      {"gate",
       {{"min_length", c.gate.min_length},
        {"min_alpha_ratio", c.gate.min_alpha_ratio},
        {"max_symbol_ratio", c.gate.max_symbol_ratio},
        {"min_mean_word_length", c.gate.min_mean_word_length},
        {"max_mean_word_length", c.gate.max_mean_word_length},
        {"max_char_share", c.gate.max_char_share},
        {"min_latin_share", c.gate.min_latin_share},
        {"lang_allowlist", c.gate.lang_allowlist}}},
      {"blacklist",
       {{"ngram", c.blacklist.ngram},
        {"min_df", c.blacklist.min_df},
        {"min_df_fraction", c.blacklist.min_df_fraction}}},
      {"minhash",
       {{"num_perm", c.minhash.num_perm},
        {"shingle_width", c.minhash.shingle_width},
        {"seed", c.minhash.seed}}},
      {"lsh", {{"bands", c.lsh.bands}, {"rows", c.lsh.rows}, {"threshold", c.lsh.threshold}}}};
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw ConfigError("unknown key \"" + k + "\" in " + where);
}

template <typename V>
void take(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  check_keys(j, {"disabled_stages", "trim_rules", "gate", "blacklist", "minhash", "lsh"},
             "clean config");
  take(j, "disabled_stages", c.disabled_stages);
  if (j.contains("trim_rules")) {
    c.trim_rules.clear();
    if (!j.at("trim_rules").is_array()) throw ConfigError("trim_rules must be an array");
    for (const auto& r : j.at("trim_rules")) {
      check_keys(r, {"name", "pattern"}, "trim rule");
      TrimRule t;
      take(r, "name", t.name);
      take(r, "pattern", t.pattern);
      c.trim_rules.push_back(t);
    }
  }
  if (j.contains("gate")) {
    const auto& g = j.at("gate");
    check_keys(g, {"min_length", "min_alpha_ratio", "max_symbol_ratio", "min_mean_word_length",
                   "max_mean_word_length", "max_char_share", "min_latin_share",
                   "lang_allowlist"},
               "gate");
    take(g, "min_length", c.gate.min_length);
    take(g, "min_alpha_ratio", c.gate.min_alpha_ratio);
    take(g, "max_symbol_ratio", c.gate.max_symbol_ratio);
    take(g, "min_mean_word_length", c.gate.min_mean_word_length);
    take(g, "max_mean_word_length", c.gate.max_mean_word_length);
    take(g, "max_char_share", c.gate.max_char_share);
    take(g, "min_latin_share", c.gate.min_latin_share);
    take(g, "lang_allowlist", c.gate.lang_allowlist);
  }
  if (j.contains("blacklist")) {
    const auto& b = j.at("blacklist");
    check_keys(b, {"ngram", "min_df", "min_df_fraction"}, "blacklist");
    take(b, "ngram", c.blacklist.ngram);
    take(b, "min_df", c.blacklist.min_df);
    take(b, "min_df_fraction", c.blacklist.min_df_fraction);
  }
  if (j.contains("minhash")) {
    const auto& m = j.at("minhash");
    check_keys(m, {"num_perm", "shingle_width", "seed"}, "minhash");
    take(m, "num_perm", c.minhash.num_perm);
    take(m, "shingle_width", c.minhash.shingle_width);
    take(m, "seed", c.minhash.seed);
  }
  if (j.contains("lsh")) {
    const auto& l = j.at("lsh");
    check_keys(l, {"bands", "rows", "threshold"}, "lsh");
    take(l, "bands", c.lsh.bands);
    take(l, "rows", c.lsh.rows);
    take(l, "threshold", c.lsh.threshold);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Inputs

LoadedInputs load_inputs(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a readable directory: " + dir);
  std::vector<fs::path> files;
  for (fs::recursive_directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file(ec)) files.push_back(it->path());
  if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
  std::sort(files.begin(), files.end());

  LoadedInputs in;
  for (const auto& f : files) {
    ++in.files_seen;
    const std::string rel = fs::relative(f, dir).generic_string();
    const std::string ext = f.extension().string();
    if (ext != ".jsonl" && ext != ".txt") {
      in.skipped.push_back({rel, std::nullopt, "unsupported file type"});
      continue;
    }
    std::ifstream is(f, std::ios::binary);
    if (!is) {
      in.skipped.push_back({rel, std::nullopt, "unreadable"});
      continue;
    }
    if (ext == ".txt") {
      std::ostringstream ss;
      ss << is.rdbuf();
      if (is.bad()) {
        in.skipped.push_back({rel, std::nullopt, "read error"});
        continue;
      }
      in.records.push_back({rel, ss.str(), std::nullopt});
      ++in.files_read;
      continue;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      try {
        const auto j = json::parse(line);
        if (!j.is_object() || !j.contains("text") || !j.at("text").is_string())
          throw std::runtime_error("record needs a string \"text\" field");
        InputRecord r;
        r.text = j.at("text").get<std::string>();
        r.source_tag = j.contains("source_tag") && j.at("source_tag").is_string()
                           ? j.at("source_tag").get<std::string>()
                           : rel;
        if (j.contains("lang_hint") && j.at("lang_hint").is_string())
          r.lang_hint = j.at("lang_hint").get<std::string>();
        in.records.push_back(std::move(r));
      } catch (const std::exception& e) {
        in.skipped.push_back({rel, line_no, e.what()});
      }
    }
    if (is.bad()) {
      in.skipped.push_back({rel, std::nullopt, "read error"});
      continue;
    }
    ++in.files_read;
  }
  return in;
}

// ---------------------------------------------------------------------------
// Pipeline

std::uint64_t document_id(std::string_view source_tag, std::string_view raw_text) {
  std::uint64_t h = fnv1a(source_tag);
  h = fnv1a(std::string_view("\0", 1), h);
  h = fnv1a(raw_text, h);
  return splitmix64(h) & ((1ULL << 53) - 1);
}

std::vector<const DocumentRecord*> PipelineResult::kept() const {
  std::vector<const DocumentRecord*> out;
  for (const auto& d : docs)
    if (d.kept()) out.push_back(&d);
  return out;
}

namespace {

std::size_t alive_chars(const std::vector<DocumentRecord>& docs) {
  std::size_t n = 0;
  for (const auto& d : docs)
    if (d.kept()) n += count_code_points(d.text);
  return n;
}

std::size_t alive_count(const std::vector<DocumentRecord>& docs) {
  return static_cast<std::size_t>(
      std::count_if(docs.begin(), docs.end(), [](const auto& d) { return d.kept(); }));
}

std::string gate_reasons(const GateResult& g) {
  std::string s;
  for (auto r : g.reasons) s += (s.empty() ? "" : ",") + std::string(reason_name(r));
  return s;
}

}  // namespace

PipelineResult run_pipeline(std::vector<InputRecord> inputs, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult res;

  // Canonical order: by id, collisions broken by content.
  std::sort(inputs.begin(), inputs.end(), [](const InputRecord& a, const InputRecord& b) {
    return std::tie(a.source_tag, a.text, a.lang_hint) < std::tie(b.source_tag, b.text, b.lang_hint);
  });
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    keyed.emplace_back(document_id(inputs[i].source_tag, inputs[i].text), i);
  // Ties broken by content so probing does not depend on input order.
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    const auto& x = inputs[a.second];
    const auto& y = inputs[b.second];
    return std::tie(x.source_tag, x.text) < std::tie(y.source_tag, y.text);
  });
  std::set<std::uint64_t> used;
  auto& docs = res.docs;
  for (auto [id, i] : keyed) {
    while (used.count(id)) id = (id + 1) & ((1ULL << 53) - 1);
    used.insert(id);
    DocumentRecord d;
    d.doc_id = id;
    d.source_tag = std::move(inputs[i].source_tag);
    d.text = std::move(inputs[i].text);
    d.lang_hint = std::move(inputs[i].lang_hint);
    docs.push_back(std::move(d));
  }
  std::sort(docs.begin(), docs.end(),
            [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
  const auto n = static_cast<std::ptrdiff_t>(docs.size());

  auto begin_stage = [&](const char* name) {
    StageStats s;
    s.name = name;
    s.enabled = cfg.enabled(name);
    s.docs_in = alive_count(docs);
    s.chars_in = alive_chars(docs);
    return s;
  };
  auto end_stage = [&](StageStats s) {
    s.docs_dropped = s.docs_in - alive_count(docs);
    s.chars_out = alive_chars(docs);
    res.stages.push_back(s);
  };

  {  // sanitize
    auto st = begin_stage("sanitize");
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      auto& d = docs[static_cast<std::size_t>(i)];
      try {
        d.text = normalize_unicode(d.text);
      } catch (const EncodingError& e) {
        d.dropped_at = "sanitize";
        d.drop_reason = "invalid UTF-8 at byte " + std::to_string(e.byte_offset());
      }
    }
    end_stage(st);
  }

  {  // trim
    auto st = begin_stage("trim");
    if (st.enabled) {
      const Trimmer trimmer(cfg.trim_rules);
#pragma omp parallel for schedule(dynamic, 8)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        auto& d = docs[static_cast<std::size_t>(i)];
        if (!d.kept()) continue;
        std::string t = trimmer.apply(d.text);
        d.trimmed = t != d.text;
        d.text = std::move(t);
      }
    }
    end_stage(st);
  }

  auto gate_pass = [&](const char* stage) {
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      auto& d = docs[static_cast<std::size_t>(i)];
      if (!d.kept()) continue;
      const auto g = heuristic_gate(d.text, cfg.gate, d.lang_hint);
      if (!g.pass) {
        d.gated_out = true;
        d.dropped_at = stage;
        d.drop_reason = gate_reasons(g);
      }
    }
  };

  {  // gate
    auto st = begin_stage("gate");
    if (st.enabled) gate_pass("gate");
    end_stage(st);
  }

  {  // blacklist
    auto st = begin_stage("blacklist");
    if (st.enabled) {
      std::vector<std::size_t> alive;
      std::vector<std::string> texts;
      for (std::size_t i = 0; i < docs.size(); ++i)
        if (docs[i].kept()) alive.push_back(i), texts.push_back(docs[i].text);
      const Blacklist bl = build_blacklist(texts, cfg.blacklist);
      res.blacklist_size = bl.size();
      for (std::size_t k = 0; k < alive.size(); ++k) {
        auto& d = docs[alive[k]];
        auto a = apply_blacklist(d.text, bl, cfg.blacklist.ngram);
        if (a.lines_removed) {
          d.boilerplate_hit = true;
          res.blacklist_lines_removed += a.lines_removed;
          d.text = std::move(a.text);
        }
      }
    }
    end_stage(st);
  }

  {  // dedup
    auto st = begin_stage("dedup");
    if (st.enabled) {
      std::vector<std::size_t> alive;
      std::vector<std::string> texts;
      std::vector<std::uint64_t> ids;
      for (std::size_t i = 0; i < docs.size(); ++i)
        if (docs[i].kept()) {
          alive.push_back(i);
          texts.push_back(docs[i].text);
          ids.push_back(docs[i].doc_id);
        }
      const auto sigs = parallel::signatures(texts, cfg.minhash);
      res.dedup = lsh_dedup(ids, sigs, cfg.lsh);
      for (std::size_t k = 0; k < alive.size(); ++k)
        if (const auto& dup = res.dedup.duplicate_of[k]) {
          auto& d = docs[alive[k]];
          d.duplicate_of = *dup;
          d.dropped_at = "dedup";
          d.drop_reason = "duplicate of " + std::to_string(*dup);
        }
    }
    end_stage(st);
  }

  {  // validate
    auto st = begin_stage("validate");
    if (st.enabled) gate_pass("validate");
    end_stage(st);
  }
  return res;
}

json audit_json(const PipelineResult& r, const PipelineConfig& cfg,
                const LoadedInputs* inputs) {
  json j;
  j["config"] = to_json(cfg);
  j["trim_rules_version"] = kTrimRulesVersion;
  if (inputs) {
    json skipped = json::array();
    for (const auto& s : inputs->skipped) {
      json e{{"path", s.path}, {"reason", s.reason}};
      e["line"] = s.line ? json(*s.line) : json(nullptr);
      skipped.push_back(e);
    }
    j["inputs"] = {{"files_seen", inputs->files_seen},
                   {"files_read", inputs->files_read},
                   {"skipped", skipped}};
  }
  j["documents_in"] = r.docs.size();
  j["documents_out"] = r.kept().size();
  json stages = json::array();
  for (const auto& s : r.stages)
    stages.push_back({{"stage", s.name},
                      {"enabled", s.enabled},
                      {"docs_in", s.docs_in},
                      {"docs_dropped", s.docs_dropped},
                      {"chars_in", s.chars_in},
                      {"chars_out", s.chars_out}});
  j["stages"] = stages;
  j["blacklist"] = {{"ngrams", r.blacklist_size}, {"lines_removed", r.blacklist_lines_removed}};
  json clusters = json::array();
  for (const auto& c : r.dedup.clusters)
    clusters.push_back({{"survivor", c.survivor}, {"duplicates", c.duplicates}});
  j["dedup"] = {{"candidate_pairs", r.dedup.candidate_pairs},
                {"linked_pairs", r.dedup.linked_pairs},
                {"clusters", clusters}};
  json dropped = json::array();
  for (const auto& d : r.docs)
    if (!d.kept())
      dropped.push_back({{"doc_id", d.doc_id},
                         {"source_tag", d.source_tag},
                         {"stage", d.dropped_at},
                         {"reason", d.drop_reason}});
  j["dropped"] = dropped;
  return j;
}

void write_records(const std::string& path, const PipelineResult& r) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  for (const auto* d : r.kept()) {
    json j{{"doc_id", d->doc_id}, {"source_tag", d->source_tag}, {"text", d->text}};
    if (d->lang_hint) j["lang_hint"] = *d->lang_hint;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace toba::corpus
