#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "toba/common.hpp"
#include "toba/corpus.hpp"
#include "toba/rng.hpp"
#include "toba/text.hpp"

using namespace toba;
using namespace toba::corpus;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = TOBA_FIXTURE_DIR;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const json& meta() {
  static const json m = read_json_file(kFixtures + "/clean_corpus_meta.json");
  return m;
}

std::string prose(Rng& rng, std::size_t words) {
  static const char* vocab[] = {"rumah", "sekolah", "pasar", "jalan",   "kota",
                                "sungai", "gunung", "danau", "berjalan", "membaca",
                                "anak",   "ibu",    "bapak", "dengan",   "untuk",
                                "besar",  "kecil",  "indah", "bersama",  "kembali"};
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += (i % 11 == 0) ? ". " : " ";
    s += vocab[rng.below(std::size(vocab))];
  }
  return s + ".";
}

// Random strings over a palette with the awkward cases mixed in.
std::string random_messy(Rng& rng) {
  static const char* palette[] = {"a",  "b",       "Z",      " ",      "  ",     "\t",
                                  "\n", "\n\n",    "\r\n",   "\x01",   "\x7f",   "e\xcc\x81",
                                  "\xc3\xa9",      "\xc2\xa0", "\xe2\x80\x83", "\xc3\xb1",
                                  "n\xcc\x83",     "-",      "'",      "1"};
  std::string s;
  const std::size_t n = rng.below(40);
  for (std::size_t i = 0; i < n; ++i) s += palette[rng.below(std::size(palette))];
  return s;
}

std::vector<InputRecord> fixture_inputs() {
  return load_inputs(kFixtures + "/clean_corpus").records;
}

std::map<std::string, const DocumentRecord*> by_tag(const PipelineResult& r) {
  std::map<std::string, const DocumentRecord*> m;
  for (const auto& d : r.docs) m[d.source_tag] = &d;
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// normalize_unicode

TEST_CASE("normalize_unicode examples") {
  CHECK(normalize_unicode("e\xcc\x81") == "\xc3\xa9");
  CHECK(text::decode_utf8(normalize_unicode("e\xcc\x81")).size() == 1);
  CHECK(normalize_unicode("plain ascii text") == "plain ascii text");
  CHECK(normalize_unicode(std::string("a\0b  c", 6)) == "ab c");
  CHECK(normalize_unicode("  one\t\ttwo \n\n three  \r\n") == "one two\nthree");
  CHECK(normalize_unicode("") == "");
  CHECK(normalize_unicode("x\xc2\xa0y") == "x y");
}

TEST_CASE("normalize_unicode reports the offset of bad bytes") {
  try {
    normalize_unicode("abc\xff" "def");
    FAIL("expected EncodingError");
  } catch (const EncodingError& e) {
    CHECK(e.byte_offset() == 3);
  }
  try {
    normalize_unicode("ok \xc3\xa9 \xe2\x82");
    FAIL("expected EncodingError");
  } catch (const EncodingError& e) {
    CHECK(e.byte_offset() == 6);
  }
  CHECK_THROWS_AS(normalize_unicode("\xed\xa0\x80"), EncodingError);  // surrogate
  CHECK_THROWS_AS(normalize_unicode("\xc0\xaf"), EncodingError);      // overlong
}

TEST_CASE("normalize_unicode is idempotent and leaves no controls or runs") {
  Rng rng(3, 0);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::string in = random_messy(rng);
    const std::string once = normalize_unicode(in);
    CHECK(normalize_unicode(once) == once);
    CHECK(text::nfc(once) == once);
    CHECK(once.find("  ") == std::string::npos);
    CHECK(once.find("\n\n") == std::string::npos);
    for (char32_t cp : text::decode_utf8(once)) CHECK((!text::is_control(cp) || cp == U'\n'));
    if (!once.empty()) {
      CHECK(once.front() != ' ');
      CHECK(once.back() != ' ');
      CHECK(once.back() != '\n');
    }
  }
}

// ---------------------------------------------------------------------------
// regex_trim

TEST_CASE("regex_trim examples") {
  CHECK(regex_trim("see https://x.y now") == "see now");
  CHECK(regex_trim("nothing to remove here") == "nothing to remove here");
  CHECK(regex_trim("") == "");
  CHECK(regex_trim("fakta ini [12] sudah dicek [3, 4]") == "fakta ini sudah dicek");
  CHECK(regex_trim("lihat [[Kota Medan|Medan]] dan [[Toba]]") == "lihat Medan dan Toba");
  CHECK(regex_trim("awal {{kotak info}} akhir") == "awal akhir");
  CHECK(regex_trim("== Sejarah ==\nisi paragraf") == "Sejarah\nisi paragraf");
  CHECK(regex_trim("teks\nHalaman 3 dari 10\nlanjut") == "teks\nlanjut");
  CHECK(regex_trim("teks\nHak cipta 2020 Penerbit\nlanjut") == "teks\nlanjut");
  CHECK(regex_trim("kata '''tebal''' di sini") == "kata tebal di sini");
  CHECK(regex_trim("ma'af tetap utuh") == "ma'af tetap utuh");
  CHECK(regex_trim("a <ref name=x>catatan</ref> b <br/> c") == "a b c");
  CHECK(regex_trim("kunjungi www.contoh.id segera") == "kunjungi segera");
}

TEST_CASE("regex_trim is idempotent") {
  Rng rng(4, 0);
  static const char* bits[] = {"kata", " ", "\n", "[1]", "[[", "]]", "|", "{{", "}}",
                               "http://a.b/c", "==", "''", "<b>", "</b>", "[", "]", "Halaman 2"};
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const std::size_t n = rng.below(25);
    for (std::size_t i = 0; i < n; ++i) s += bits[rng.below(std::size(bits))];
    const std::string once = regex_trim(normalize_unicode(s));
    CHECK(regex_trim(once) == once);
    CHECK(text::decode_utf8(once).size() <= text::decode_utf8(normalize_unicode(s)).size());
  }
}

TEST_CASE("plain prose passes through the trimmer untouched") {
  Rng rng(5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::string p = prose(rng, 60);
    CHECK(regex_trim(p) == p);
  }
}

TEST_CASE("custom trim rules and bad patterns") {
  const Trimmer t(std::vector<TrimRule>{{"digits", "[0-9]+"}});
  CHECK(t.apply("a1b22 c") == "ab c");
  CHECK_THROWS_AS(Trimmer(std::vector<TrimRule>{{"bad", "(unclosed"}}), ConfigError);
  CHECK(std::string(kTrimRulesVersion) == "toba-trim-v1");
}

// ---------------------------------------------------------------------------
// heuristic_gate

TEST_CASE("gate passes natural prose") {
  for (const char* f : {"indonesia.txt", "batak.txt", "minang.txt"}) {
    const std::string t = normalize_unicode(slurp(kFixtures + "/corpus/" + f));
    const auto g = heuristic_gate(t);
    CAPTURE(f);
    CHECK(g.pass);
    CHECK(g.alpha_ratio > 0.6);
  }
  Rng rng(6, 0);
  std::string p = prose(rng, 200).substr(0, 1000);
  while (p.back() == ' ') p.pop_back();
  const auto g = heuristic_gate(p);
  CHECK(g.length >= 990);
  CHECK(g.pass);
}

TEST_CASE("gate failures carry their reasons") {
  auto has = [](const GateResult& g, GateReason r) {
    return std::find(g.reasons.begin(), g.reasons.end(), r) != g.reasons.end();
  };
  const auto flood = heuristic_gate(std::string(300, '{'));
  CHECK_FALSE(flood.pass);
  CHECK(has(flood, GateReason::symbol_ratio));
  const auto empty = heuristic_gate("");
  CHECK_FALSE(empty.pass);
  CHECK(empty.reasons.front() == GateReason::too_short);

  Rng rng(7, 0);
  const std::string ok = prose(rng, 80);
  REQUIRE(heuristic_gate(ok).pass);
  CHECK(heuristic_gate(ok.substr(0, 150)).reasons == std::vector{GateReason::too_short});

  std::string dashes;
  for (int i = 0; i < 30; ++i) dashes += "ab-cd-ef ";
  const auto d = heuristic_gate(dashes);
  CHECK(d.reasons == std::vector{GateReason::char_dominance});

  const auto longword = heuristic_gate(std::string(250, 'a') + " " + std::string(250, 'b'));
  CHECK(has(longword, GateReason::word_length));

  std::string digits;
  for (int i = 0; i < 40; ++i) digits += "kata 12345 ";
  const auto dg = heuristic_gate(digits);
  CHECK(has(dg, GateReason::symbol_ratio));
  CHECK(has(dg, GateReason::alpha_ratio));

  // Cyrillic prose is fine by every ratio but not by script.
  std::string cyr;
  for (int i = 0; i < 40; ++i) cyr += "\xd0\xb4\xd0\xbe\xd0\xbc \xd0\xba\xd0\xbd\xd0\xb8\xd0\xb3\xd0\xb0 ";
  CHECK(heuristic_gate(cyr).reasons == std::vector{GateReason::language});
  GateConfig any_script;
  any_script.min_latin_share = 0.0;
  CHECK(heuristic_gate(cyr, any_script).pass);

  GateConfig allow;
  allow.lang_allowlist = {"indonesia", "batak"};
  CHECK(heuristic_gate(ok, allow, std::string("batak")).pass);
  CHECK(heuristic_gate(ok, allow, std::nullopt).pass);
  CHECK(heuristic_gate(ok, allow, std::string("jawa")).reasons == std::vector{GateReason::language});
  CHECK(std::string(reason_name(GateReason::symbol_ratio)) == "symbol_ratio");
}

// ---------------------------------------------------------------------------
// Blacklist

TEST_CASE("footer repeated in half of 1000 documents is blacklisted and removed") {
  Rng rng(8, 0);
  const std::string footer = "Teks ini diambil dari arsip terbuka milik bersama";
  std::vector<std::string> docs;
  for (int i = 0; i < 1000; ++i) {
    std::string d = prose(rng, 30) + " nomor" + std::to_string(i);
    if (i % 2 == 0) d += "\n" + footer;
    docs.push_back(d);
  }
  const auto bl = build_blacklist(docs);
  for (const auto& g : line_ngrams(footer, 5)) CHECK(bl.count(g));

  // Brute-force document frequency as the oracle.
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    std::set<std::string> seen;
    std::istringstream ls(d);
    std::string line;
    while (std::getline(ls, line))
      for (const auto& g : line_ngrams(line, 5)) seen.insert(g);
    for (const auto& g : seen) ++df[g];
  }
  std::set<std::string> expected;
  for (const auto& [g, c] : df)
    if (c > 10) expected.insert(g);
  CHECK(bl == Blacklist(expected.begin(), expected.end()));

  for (int i = 0; i < 1000; i += 2) {
    const auto a = apply_blacklist(docs[static_cast<std::size_t>(i)], bl);
    CHECK(a.text.find(footer) == std::string::npos);
    CHECK(a.lines_removed >= 1);
  }
}

TEST_CASE("blacklist thresholds") {
  const std::string line = "satu dua tiga empat lima enam";
  auto corpus = [&](std::size_t with, std::size_t without) {
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < with; ++i) docs.push_back("doc " + std::to_string(i) + "\n" + line);
    for (std::size_t i = 0; i < without; ++i) docs.push_back("lain " + std::to_string(i));
    return docs;
  };
  CHECK(build_blacklist(corpus(10, 0)).empty());
  CHECK(build_blacklist(corpus(11, 0)).size() == 2);
  // 1% of 3000 is 30, above the floor of 10.
  CHECK(build_blacklist(corpus(30, 2970)).empty());
  CHECK(build_blacklist(corpus(31, 2969)).size() == 2);
  CHECK(build_blacklist(std::vector<std::string>{line}).empty());

  const Blacklist bl{"satu dua tiga empat lima"};
  CHECK(apply_blacklist("unik sekali baris ini saja ya", bl).text == "unik sekali baris ini saja ya");
  const auto a = apply_blacklist("awal\n" + line + "\nakhir", bl);
  CHECK(a.text == "awal\nakhir");
  CHECK(a.lines_removed == 1);
  CHECK(line_ngrams("a b c d", 5).empty());
  CHECK(line_ngrams("a b c d e f", 5) == std::vector<std::string>{"a b c d e", "b c d e f"});
}

// ---------------------------------------------------------------------------
// MinHash

TEST_CASE("shingles and exact jaccard") {
  CHECK(shingle_hashes("abcdefg", 5).size() == 3);
  CHECK(shingle_hashes("aaaaaaa", 5).size() == 1);
  CHECK(shingle_hashes("abc", 5).size() == 1);
  CHECK(shingle_hashes("", 5).size() == 1);
  CHECK(shingle_hashes("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9x", 5).size() == 2);
  CHECK(exact_jaccard("abcdef", "abcdef", 5) == 1.0);
  CHECK(exact_jaccard("abcdef", "bcdefg", 5) == doctest::Approx(1.0 / 3.0));
  CHECK(exact_jaccard("aaaaa", "bbbbb", 5) == 0.0);
  CHECK_THROWS_AS(shingle_hashes("x", 0), ConfigError);
}

TEST_CASE("exact jaccard agrees with the fixture generator") {
  for (const char* k : {"jaccard_third", "jaccard_half"}) {
    const auto& p = meta().at(k);
    CHECK(exact_jaccard(p.at("a").get<std::string>(), p.at("b").get<std::string>(), 5) ==
          doctest::Approx(p.at("jaccard").get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("minhash estimates") {
  const MinHashParams p;
  CHECK(p.num_perm == 256);
  CHECK(p.shingle_width == 5);
  const std::string t = "rumah gadang di tapi danau";
  CHECK(minhash_signature(t, p).values == minhash_signature(t, p).values);
  CHECK(minhash_signature(t, p).values.size() == 256);
  CHECK(estimate_jaccard(minhash_signature(t, p), minhash_signature(t, p)) == 1.0);

  const auto& third = meta().at("jaccard_third");
  const double j = third.at("jaccard").get<double>();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MinHashParams ps = p;
    ps.seed = seed;
    const double est = estimate_jaccard(minhash_signature(third.at("a").get<std::string>(), ps),
                                        minhash_signature(third.at("b").get<std::string>(), ps));
    CHECK(std::abs(est - j) <= 0.1);
  }

  // Exact sets: {0..199} and {100..299} share a third.
  std::vector<std::uint64_t> a, b, c;
  for (std::uint64_t i = 0; i < 200; ++i) a.push_back(i * 7919 + 13);
  for (std::uint64_t i = 100; i < 300; ++i) b.push_back(i * 7919 + 13);
  for (std::uint64_t i = 1000; i < 1200; ++i) c.push_back(i * 7919 + 13);
  const double e_ab = estimate_jaccard(minhash_from_hashes(a, p), minhash_from_hashes(b, p));
  CHECK(std::abs(e_ab - 1.0 / 3.0) <= 0.1);
  CHECK(estimate_jaccard(minhash_from_hashes(a, p), minhash_from_hashes(c, p)) <= 0.1);
  CHECK(estimate_jaccard(minhash_signature("aaaaaaaaaa", p), minhash_signature("zzzzzzzzzz", p)) <= 0.1);

  MinHashParams other = p;
  other.seed = 1;
  CHECK_THROWS_AS(estimate_jaccard(minhash_signature(t, p), minhash_signature(t, other)),
                  ConfigError);
  MinHashParams zero = p;
  zero.num_perm = 0;
  CHECK_THROWS_AS(minhash_signature(t, zero), ConfigError);
}

TEST_CASE("serial and parallel signatures are identical") {
  Rng rng(9, 0);
  std::vector<std::string> texts;
  for (int i = 0; i < 64; ++i) texts.push_back(prose(rng, 20 + rng.below(100)));
  const auto s = serial::signatures(texts, {});
  const auto q = parallel::signatures(texts, {});
  REQUIRE(s.size() == q.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].values == q[i].values);
    CHECK(s[i].values == minhash_signature(texts[i], {}).values);
  }
}

// ---------------------------------------------------------------------------
// LSH

TEST_CASE("lsh collision probabilities for 32 bands of 8 rows") {
  CHECK(lsh_collision_probability(0.95, 32, 8) > 0.9999);
  CHECK(lsh_collision_probability(0.85, 32, 8) > 0.999);
  const double s = std::pow(1.0 / 32.0, 1.0 / 8.0);
  CHECK(s == doctest::Approx(0.648).epsilon(1e-3));
  CHECK(lsh_collision_probability(s, 32, 8) == doctest::Approx(1 - std::pow(1 - 1.0 / 32, 32)));
  CHECK(lsh_collision_probability(0.3, 32, 8) < 0.01);
  CHECK(lsh_collision_probability(0.0, 32, 8) == 0.0);
  CHECK(lsh_collision_probability(1.0, 32, 8) == 1.0);
}

TEST_CASE("lsh_dedup examples") {
  const MinHashParams p;
  Rng rng(10, 0);
  const std::string a = prose(rng, 80), b = prose(rng, 80);
  const std::vector<std::uint64_t> ids{42, 7, 99};
  const std::vector<MinHashSignature> sigs{minhash_signature(a, p), minhash_signature(a, p),
                                           minhash_signature(b, p)};
  const auto r = lsh_dedup(ids, sigs);
  CHECK(r.duplicate_of[0] == std::optional<std::uint64_t>(7));
  CHECK_FALSE(r.duplicate_of[1]);
  CHECK_FALSE(r.duplicate_of[2]);
  REQUIRE(r.clusters.size() == 1);
  CHECK(r.clusters[0].survivor == 7);
  CHECK(r.clusters[0].duplicates == std::vector<std::uint64_t>{42});

  const auto empty = lsh_dedup({}, {});
  CHECK(empty.duplicate_of.empty());
  CHECK(empty.clusters.empty());

  const auto& half = meta().at("jaccard_half");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MinHashParams ps;
    ps.seed = seed;
    const std::vector<MinHashSignature> hs{
        minhash_signature(half.at("a").get<std::string>(), ps),
        minhash_signature(half.at("b").get<std::string>(), ps)};
    const std::vector<std::uint64_t> hid{1, 2};
    const auto hr = lsh_dedup(hid, hs);
    CHECK(hr.linked_pairs == 0);
    CHECK_FALSE(hr.duplicate_of[0]);
    CHECK_FALSE(hr.duplicate_of[1]);
  }

  MinHashParams other;
  other.seed = 5;
  const std::vector<MinHashSignature> mixed{minhash_signature(a, p), minhash_signature(a, other)};
  const std::vector<std::uint64_t> two{1, 2};
  CHECK_THROWS_AS(lsh_dedup(two, mixed), ConfigError);
  LshConfig wide;
  wide.bands = 64;
  CHECK_THROWS_AS(lsh_dedup(two, std::vector<MinHashSignature>{sigs[0], sigs[1]}, wide),
                  ConfigError);
}

TEST_CASE("transitive duplicate chains keep the lowest id") {
  const MinHashParams p;
  std::vector<std::uint64_t> ids;
  std::vector<MinHashSignature> sigs;
  Rng rng(11, 0);
  const std::string base = prose(rng, 120);
  for (std::uint64_t k = 0; k < 5; ++k) {
    ids.push_back(100 - k * 10);
    sigs.push_back(minhash_signature(base + (k ? " tambahan" + std::to_string(k) : ""), p));
  }
  const auto r = lsh_dedup(ids, sigs);
  REQUIRE(r.clusters.size() == 1);
  CHECK(r.clusters[0].survivor == 60);
  CHECK(r.clusters[0].duplicates == std::vector<std::uint64_t>{70, 80, 90, 100});
}

// ---------------------------------------------------------------------------
// Pipeline

TEST_CASE("empty input gives empty output and a report of zeros") {
  const std::string dir = testing::temp_dir("clean_empty");
  const auto in = load_inputs(dir);
  CHECK(in.records.empty());
  const auto r = run_pipeline(in.records);
  CHECK(r.docs.empty());
  CHECK(r.stages.size() == 6);
  for (const auto& s : r.stages) {
    CHECK(s.docs_in == 0);
    CHECK(s.docs_dropped == 0);
  }
  const auto audit = audit_json(r, {}, &in);
  CHECK(audit.at("documents_in") == 0);
  CHECK(audit.at("documents_out") == 0);
  write_records(dir + "/out.jsonl", r);
  CHECK(slurp(dir + "/out.jsonl").empty());
  CHECK_THROWS_AS(load_inputs(dir + "/missing"), IoError);
}

TEST_CASE("bundled fixture loses exactly the planted duplicates and floods") {
  const auto r = run_pipeline(fixture_inputs());
  CHECK(r.docs.size() == 200);
  const auto tags = by_tag(r);
  std::set<std::string> expected_drop;
  for (const auto& f : meta().at("symbol_floods")) {
    const auto* d = tags.at(f.get<std::string>());
    CHECK(d->dropped_at == "gate");
    CHECK(d->gated_out);
    expected_drop.insert(d->source_tag);
  }
  for (const auto& pp : meta().at("planted_pairs")) {
    const auto* a = tags.at(pp.at("original").get<std::string>());
    const auto* b = tags.at(pp.at("duplicate").get<std::string>());
    CAPTURE(a->source_tag);
    CHECK(a->kept() != b->kept());
    const auto* lost = a->kept() ? b : a;
    const auto* kept = a->kept() ? a : b;
    CHECK(lost->dropped_at == "dedup");
    CHECK(lost->duplicate_of == std::optional<std::uint64_t>(kept->doc_id));
    CHECK(kept->doc_id < lost->doc_id);
    expected_drop.insert(lost->source_tag);
  }
  std::set<std::string> dropped;
  for (const auto& d : r.docs)
    if (!d.kept()) dropped.insert(d.source_tag);
  CHECK(dropped == expected_drop);
  CHECK(dropped.size() == 30);
  CHECK(r.kept().size() == 170);

  const std::string footer = meta().at("boilerplate_line").get<std::string>();
  for (const auto* d : r.kept()) CHECK(d->text.find(footer) == std::string::npos);
  for (const auto& t : meta().at("boilerplate_docs")) CHECK(tags.at(t.get<std::string>())->boilerplate_hit);
  for (const auto& t : meta().at("trim_docs")) {
    const auto* d = tags.at(t.get<std::string>());
    CHECK(d->trimmed);
    CHECK(d->text.find("http") == std::string::npos);
    CHECK(d->text.find("[[") == std::string::npos);
    CHECK(d->text.find("{{") == std::string::npos);
    CHECK(d->text.find("==") == std::string::npos);
  }
}

TEST_CASE("stages never grow the retained character count") {
  const auto r = run_pipeline(fixture_inputs());
  std::size_t prev = r.stages.front().chars_in;
  for (const auto& s : r.stages) {
    CAPTURE(s.name);
    CHECK(s.chars_out <= s.chars_in);
    CHECK(s.chars_in == prev);
    prev = s.chars_out;
  }
  std::vector<std::string> names;
  for (const auto& s : r.stages) names.push_back(s.name);
  CHECK(names == std::vector<std::string>{"sanitize", "trim", "gate", "blacklist", "dedup", "validate"});
}

TEST_CASE("surviving fixture documents are not near duplicates of each other") {
  const auto r = run_pipeline(fixture_inputs());
  const auto kept = r.kept();
  std::vector<std::set<std::string>> grams;
  for (const auto* d : kept) {
    const auto cps = text::code_points(d->text);
    std::set<std::string> g;
    for (std::size_t k = 0; k + 5 <= cps.size(); ++k)
      g.insert(cps[k] + cps[k + 1] + cps[k + 2] + cps[k + 3] + cps[k + 4]);
    grams.push_back(std::move(g));
  }
  double worst = 0;
  for (std::size_t a = 0; a < grams.size(); ++a)
    for (std::size_t b = a + 1; b < grams.size(); ++b) {
      std::size_t inter = 0;
      for (const auto& g : grams[a]) inter += grams[b].count(g);
      worst = std::max(worst, static_cast<double>(inter) /
                                  static_cast<double>(grams[a].size() + grams[b].size() - inter));
    }
  CHECK(worst <= 0.90);
}

TEST_CASE("re-running the cleaner on its own output drops nothing") {
  const std::string dir = testing::temp_dir("clean_rerun");
  const auto r1 = run_pipeline(fixture_inputs());
  fs::create_directories(dir + "/pass1");
  write_records(dir + "/pass1/clean.jsonl", r1);
  const auto in2 = load_inputs(dir + "/pass1");
  CHECK(in2.skipped.empty());
  const auto r2 = run_pipeline(in2.records);
  CHECK(r2.docs.size() == r1.kept().size());
  CHECK(r2.kept().size() == r2.docs.size());
  std::multiset<std::string> t1, t2;
  for (const auto* d : r1.kept()) t1.insert(d->text);
  for (const auto* d : r2.kept()) t2.insert(d->text);
  CHECK(t1 == t2);
}

TEST_CASE("input order does not change the output bytes") {
  const std::string dir = testing::temp_dir("clean_shuffle");
  auto inputs = fixture_inputs();
  const auto r1 = run_pipeline(inputs);
  write_records(dir + "/a.jsonl", r1);
  const std::string audit1 = audit_json(r1, {}).dump();
  Rng rng(12, 0);
  for (int round = 0; round < 3; ++round) {
    for (std::size_t i = inputs.size(); i > 1; --i)
      std::swap(inputs[i - 1], inputs[rng.below(i)]);
    const auto r2 = run_pipeline(inputs);
    write_records(dir + "/b.jsonl", r2);
    CHECK(slurp(dir + "/a.jsonl") == slurp(dir + "/b.jsonl"));
    CHECK(audit_json(r2, {}).dump() == audit1);
  }
}

TEST_CASE("turning dedup off keeps the planted pairs") {
  PipelineConfig cfg;
  cfg.disabled_stages = {"dedup"};
  const auto r = run_pipeline(fixture_inputs(), cfg);
  CHECK(r.kept().size() == 190);
  CHECK_FALSE(r.stages[4].enabled);
  CHECK(r.stages[4].docs_dropped == 0);
  PipelineConfig bad;
  bad.disabled_stages = {"sanitize"};
  CHECK_THROWS_AS(run_pipeline({}, bad), ConfigError);
  bad.disabled_stages = {"dedupe"};
  CHECK_THROWS_AS(run_pipeline({}, bad), ConfigError);
}

TEST_CASE("loader handles text files, bad lines and foreign files") {
  const std::string dir = testing::temp_dir("clean_load");
  Rng rng(13, 0);
  const std::string p1 = prose(rng, 70), p2 = prose(rng, 70);
  std::ofstream(dir + "/one.txt") << p1;
  fs::create_directories(dir + "/sub");
  std::ofstream(dir + "/sub/recs.jsonl")
      << json{{"text", p2}, {"lang_hint", "minang"}}.dump() << "\n"
      << "{not json\n"
      << json{{"body", "x"}}.dump() << "\n";
  std::ofstream(dir + "/notes.md") << "ignored";
  std::ofstream(dir + "/broken.txt", std::ios::binary) << "ab\xff" << p1;
  const auto in = load_inputs(dir);
  CHECK(in.files_seen == 4);
  CHECK(in.files_read == 3);
  REQUIRE(in.records.size() == 3);
  REQUIRE(in.skipped.size() == 3);
  CHECK(in.skipped[0].path == "notes.md");
  CHECK(in.skipped[1].path == "sub/recs.jsonl");
  CHECK(in.skipped[1].line == std::optional<std::size_t>(2));
  CHECK(in.skipped[2].line == std::optional<std::size_t>(3));

  const auto r = run_pipeline(in.records);
  const auto tags = by_tag(r);
  CHECK(tags.at("one.txt")->kept());
  CHECK(tags.at("sub/recs.jsonl")->lang_hint == std::optional<std::string>("minang"));
  const auto* broken = tags.at("broken.txt");
  CHECK(broken->dropped_at == "sanitize");
  CHECK(broken->drop_reason.find("byte 2") != std::string::npos);
}

TEST_CASE("doc ids are stable 53-bit values") {
  const auto a = document_id("tag", "text");
  CHECK(a == document_id("tag", "text"));
  CHECK(a != document_id("tag", "text2"));
  CHECK(a != document_id("tag2", "text"));
  CHECK(document_id("ab", "c") != document_id("a", "bc"));
  CHECK(a < (1ULL << 53));
  // Identical records still get distinct ids.
  std::vector<InputRecord> twins(3, InputRecord{"t", "same text", std::nullopt});
  PipelineConfig cfg;
  cfg.disabled_stages = {"gate", "validate"};
  const auto r = run_pipeline(twins, cfg);
  std::set<std::uint64_t> ids;
  for (const auto& d : r.docs) ids.insert(d.doc_id);
  CHECK(ids.size() == 3);
  CHECK(r.kept().size() == 1);
}

TEST_CASE("pipeline config json") {
  PipelineConfig c;
  c.disabled_stages = {"dedup", "trim"};
  c.gate.min_length = 50;
  c.minhash.seed = 9;
  c.lsh.threshold = 0.8;
  c.trim_rules = {{"digits", "[0-9]+"}};
  const auto back = pipeline_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(pipeline_config_from_json(json{{"gates", json::object()}}), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json{{"gate", {{"min_len", 3}}}}), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json{{"lsh", {{"bands", 64}}}}), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json{{"trim_rules", {{{"name", "x"}, {"pattern", "("}}}}}),
                  ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json{{"minhash", {{"num_perm", "many"}}}}), ConfigError);
}

TEST_CASE("audit lists drops and clusters") {
  const auto in = load_inputs(kFixtures + "/clean_corpus");
  const auto r = run_pipeline(in.records);
  const auto a = audit_json(r, {}, &in);
  CHECK(a.at("documents_in") == 200);
  CHECK(a.at("documents_out") == 170);
  CHECK(a.at("dropped").size() == 30);
  CHECK(a.at("dedup").at("clusters").size() == 20);
  CHECK(a.at("stages").size() == 6);
  CHECK(a.at("stages")[2].at("docs_dropped") == 10);
  CHECK(a.at("stages")[4].at("docs_dropped") == 20);
  CHECK(a.at("blacklist").at("lines_removed") == 40);
  CHECK(a.at("inputs").at("files_read") == 3);
}
