#pragma once

// Corpus cleaning: sanitize -> trim -> gate -> blacklist -> dedup ->
// validate. Every stage is a pure function of the documents it sees; the
// output is ordered by doc_id, which hashes (source_tag, raw text), so the
// result does not depend on input order or thread schedule.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toba/config_io.hpp"

namespace toba::corpus {

// ---------------------------------------------------------------------------
// Sanitize

// Valid UTF-8 in; NFC out, control characters other than \n and \t
// removed, every line trimmed with inner whitespace runs folded to one
// space, blank lines dropped. Throws EncodingError with the byte offset.
std::string normalize_unicode(std::string_view text);

// The whitespace part of normalize_unicode on its own.
std::string collapse_whitespace(std::string_view text);

// ---------------------------------------------------------------------------
// Trim

// Matched spans are deleted; nothing else is touched. Patterns use ICU
// regex syntax and may carry inline flags such as (?m) or (?i).
struct TrimRule {
  std::string name;
  std::string pattern;
};

inline constexpr const char* kTrimRulesVersion = "toba-trim-v1";
const std::vector<TrimRule>& default_trim_rules();

class Trimmer {
 public:
  // Throws ConfigError if a pattern does not compile.
  explicit Trimmer(std::vector<TrimRule> rules = default_trim_rules());
  ~Trimmer();
  Trimmer(Trimmer&&) noexcept;
  Trimmer& operator=(Trimmer&&) noexcept;

  // Rules run in order, then whitespace is collapsed; the pass repeats
  // until the text stops changing, so trimming is idempotent.
  std::string apply(std::string_view text) const;
  const std::vector<TrimRule>& rules() const noexcept { return rules_; }

 private:
  struct Compiled;
  std::vector<TrimRule> rules_;
  std::unique_ptr<Compiled> compiled_;
};

std::string regex_trim(std::string_view text);
std::string regex_trim(std::string_view text, const Trimmer& trimmer);

// ---------------------------------------------------------------------------
// Gate

enum class GateReason {
  too_short,
  symbol_ratio,
  alpha_ratio,
  char_dominance,
  word_length,
  language,
};
const char* reason_name(GateReason r);

struct GateConfig {
  std::size_t min_length = 200;  // code points
  double min_alpha_ratio = 0.60;
  double max_symbol_ratio = 0.25;  // digits, punctuation and symbols
  double min_mean_word_length = 2.0;
  double max_mean_word_length = 14.0;
  // Share of the text taken by the most frequent character that is neither
  // a letter nor whitespace.
  double max_char_share = 0.20;
  // Share of letters in Latin script; 0 disables the check.
  double min_latin_share = 0.80;
  // When non-empty, documents whose lang_hint is set and not listed fail.
  std::vector<std::string> lang_allowlist;
};

struct GateResult {
  bool pass = false;
  std::vector<GateReason> reasons;  // in GateReason order
  std::size_t length = 0;
  double alpha_ratio = 0.0;
  double symbol_ratio = 0.0;
  double mean_word_length = 0.0;
  double max_char_share = 0.0;
  double latin_share = 0.0;
};

GateResult heuristic_gate(std::string_view text, const GateConfig& cfg = {},
                          const std::optional<std::string>& lang_hint = std::nullopt);

// ---------------------------------------------------------------------------
// Boilerplate blacklist

struct BlacklistConfig {
  std::size_t ngram = 5;  // words
  std::size_t min_df = 10;
  double min_df_fraction = 0.01;
};

using Blacklist = std::set<std::string>;  // n-grams joined by single spaces

// Word n-grams of one line.
std::vector<std::string> line_ngrams(std::string_view line, std::size_t n);

// n-grams whose document frequency exceeds max(min_df, fraction * docs).
Blacklist build_blacklist(std::span<const std::string> docs,
                          const BlacklistConfig& cfg = {});

struct BlacklistApplied {
  std::string text;
  std::size_t lines_removed = 0;
};
BlacklistApplied apply_blacklist(std::string_view doc, const Blacklist& bl,
                                 std::size_t ngram = 5);

// ---------------------------------------------------------------------------
// MinHash and LSH

struct MinHashParams {
  std::size_t num_perm = 256;
  std::size_t shingle_width = 5;  // code points
  std::uint64_t seed = 0;

  friend bool operator==(const MinHashParams&, const MinHashParams&) = default;
};

struct MinHashSignature {
  MinHashParams params;
  std::vector<std::uint64_t> values;  // num_perm minima
};

// Sorted, distinct hashes of the character w-grams. Text shorter than w
// (including "") yields the single whole-text shingle.
std::vector<std::uint64_t> shingle_hashes(std::string_view text, std::size_t w);

// Throws ConfigError when num_perm or shingle_width is 0.
MinHashSignature minhash_signature(std::string_view text, const MinHashParams& p);
MinHashSignature minhash_from_hashes(std::span<const std::uint64_t> shingles,
                                     const MinHashParams& p);

// Fraction of agreeing components. Throws ConfigError on mismatched params.
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

// |A n B| / |A u B| over character w-gram sets; the test oracle.
double exact_jaccard(std::string_view a, std::string_view b, std::size_t w);

namespace serial {
std::vector<MinHashSignature> signatures(std::span<const std::string> texts,
                                         const MinHashParams& p);
}
namespace parallel {
std::vector<MinHashSignature> signatures(std::span<const std::string> texts,
                                         const MinHashParams& p);
}

struct LshConfig {
  std::size_t bands = 32;
  std::size_t rows = 8;
  double threshold = 0.85;  // estimated Jaccard must exceed this
};

// Probability that a pair with Jaccard j shares at least one band bucket:
// 1 - (1 - j^rows)^bands.
double lsh_collision_probability(double j, std::size_t bands, std::size_t rows);

struct DuplicateCluster {
  std::uint64_t survivor = 0;
  std::vector<std::uint64_t> duplicates;  // ascending
};

struct DedupResult {
  // Per input position: the cluster survivor's id, or empty for survivors
  // and singletons.
  std::vector<std::optional<std::uint64_t>> duplicate_of;
  std::vector<DuplicateCluster> clusters;  // by survivor id
  std::size_t candidate_pairs = 0;
  std::size_t linked_pairs = 0;
};

// Band buckets give candidate pairs; pairs whose estimate exceeds the
// threshold are linked and every linked component keeps its lowest id.
// Throws ConfigError if signatures disagree on params or if
// bands * rows exceeds num_perm.
DedupResult lsh_dedup(std::span<const std::uint64_t> ids,
                      std::span<const MinHashSignature> sigs,
                      const LshConfig& cfg = {});

// ---------------------------------------------------------------------------
// Pipeline

inline constexpr const char* kStageNames[] = {"sanitize", "trim",  "gate",
                                              "blacklist", "dedup", "validate"};

struct PipelineConfig {
  std::set<std::string> disabled_stages;  // any stage but sanitize
  std::vector<TrimRule> trim_rules = default_trim_rules();
  GateConfig gate;
  BlacklistConfig blacklist;
  MinHashParams minhash;
  LshConfig lsh;

  // Throws ConfigError.
  void validate() const;
  bool enabled(std::string_view stage) const;
};

json to_json(const PipelineConfig& c);
// Missing keys keep defaults; unknown keys throw ConfigError.
PipelineConfig pipeline_config_from_json(const json& j);

struct InputRecord {
  std::string source_tag;
  std::string text;  // raw, possibly invalid UTF-8
  std::optional<std::string> lang_hint;
};

struct SkippedInput {
  std::string path;
  std::optional<std::size_t> line;
  std::string reason;
};

struct LoadedInputs {
  std::vector<InputRecord> records;
  std::vector<SkippedInput> skipped;
  std::size_t files_seen = 0;
  std::size_t files_read = 0;
};

// Walks `dir` recursively. *.jsonl: one object per line with "text" and
// optional "source_tag" (default: the relative path) and "lang_hint";
// other keys are ignored. *.txt: the whole file is one document. Anything
// else, unreadable files and malformed lines are skipped and listed.
// Throws IoError if `dir` is not a readable directory.
LoadedInputs load_inputs(const std::string& dir);

struct DocumentRecord {
  std::uint64_t doc_id = 0;
  std::string source_tag;
  std::string text;
  std::optional<std::string> lang_hint;
  bool trimmed = false;
  bool gated_out = false;
  bool boilerplate_hit = false;
  std::optional<std::uint64_t> duplicate_of;
  std::string dropped_at;  // stage name, empty if kept
  std::string drop_reason;

  bool kept() const noexcept { return dropped_at.empty(); }
};

// 53-bit id so it survives a round trip through any JSON reader.
std::uint64_t document_id(std::string_view source_tag, std::string_view raw_text);

struct StageStats {
  std::string name;
  bool enabled = true;
  std::size_t docs_in = 0;
  std::size_t docs_dropped = 0;
  std::size_t chars_in = 0;  // code points over documents entering
  std::size_t chars_out = 0;  // code points over documents leaving
};

struct PipelineResult {
  std::vector<DocumentRecord> docs;  // every input, ascending doc_id
  std::vector<StageStats> stages;
  std::size_t blacklist_size = 0;
  std::size_t blacklist_lines_removed = 0;
  DedupResult dedup;  // ids refer to doc_id

  std::vector<const DocumentRecord*> kept() const;
};

PipelineResult run_pipeline(std::vector<InputRecord> inputs,
                            const PipelineConfig& cfg = {});

json audit_json(const PipelineResult& r, const PipelineConfig& cfg,
                const LoadedInputs* inputs = nullptr);

// One {"doc_id", "source_tag", "text"[, "lang_hint"]} object per line, in
// doc_id order. Throws IoError.
void write_records(const std::string& path, const PipelineResult& r);

}  // namespace toba::corpus
