// tokenizer build --in <dir> --min-count N --out vocab.tsv
// tokenizer encode --vocab vocab.tsv [--in text.txt] [--out ids.tokens]
// tokenizer decode --vocab vocab.tsv [--in ids.tokens] [--out text.txt]
//
// encode and decode stream line by line: one document per line, ids
// separated by single spaces, which is the format train --data reads.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli_util.hpp"
#include "toba/corpus.hpp"
#include "toba/tokenizer.hpp"

using namespace toba;

namespace {

struct Streams {
  std::ifstream fin;
  std::ofstream fout;
  std::istream* in = &std::cin;
  std::ostream* out = &std::cout;

  Streams(const std::string& in_path, const std::string& out_path) {
    if (!in_path.empty() && in_path != "-") {
      fin.open(in_path, std::ios::binary);
      if (!fin) throw IoError("cannot open " + in_path);
      in = &fin;
    }
    if (!out_path.empty() && out_path != "-") {
      fout.open(out_path, std::ios::binary);
      if (!fout) throw IoError("cannot write " + out_path);
      out = &fout;
    }
  }
};

int build(const std::string& dir, std::uint64_t min_count, const std::string& out) {
  const auto loaded = corpus::load_inputs(dir);
  for (const auto& s : loaded.skipped)
    std::cerr << "tokenizer: skipped " << s.path
              << (s.line ? ":" + std::to_string(*s.line) : "") << " (" << s.reason << ")\n";
  std::vector<std::string> docs;
  docs.reserve(loaded.records.size());
  for (const auto& r : loaded.records) docs.push_back(r.text);
  const auto vocab = tok::build_vocab(docs, min_count);
  vocab.save_file(out);
  std::cerr << "tokenizer: " << docs.size() << " documents, " << vocab.size()
            << " units (" << tok::kNumSpecials << " specials)\n";
  return 0;
}

int encode(const std::string& vocab_path, const std::string& in, const std::string& out) {
  const auto vocab = tok::SyllableVocab::load_file(vocab_path);
  Streams s(in, out);
  std::string line;
  while (std::getline(*s.in, line)) {
    const auto ids = tok::encode(line, vocab);
    for (std::size_t i = 0; i < ids.size(); ++i) *s.out << (i ? " " : "") << ids[i];
    *s.out << '\n';
  }
  return s.out->good() ? 0 : 1;
}

int decode(const std::string& vocab_path, const std::string& in, const std::string& out) {
  const auto vocab = tok::SyllableVocab::load_file(vocab_path);
  Streams s(in, out);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*s.in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<tok::TokenId> ids;
    std::string field;
    while (ls >> field) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size()) throw ParseError("not a token id: '" + field + "'", line_no);
      if (v < 0 || v >= static_cast<long long>(vocab.size()))
        throw OutOfRange("token id " + field + " outside the vocabulary (line " +
                         std::to_string(line_no) + ")");
      ids.push_back(static_cast<tok::TokenId>(v));
    }
    *s.out << tok::decode(ids, vocab) << '\n';
  }
  return s.out->good() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syllabic tokenizer"};
  app.require_subcommand(1);

  std::string in_dir, out_path, vocab_path, in_path, stream_out;
  std::uint64_t min_count = 1;

  auto* b = app.add_subcommand("build", "Build a vocabulary from .txt/.jsonl files");
  b->add_option("--in", in_dir, "Input directory")->required();
  b->add_option("--min-count", min_count, "Minimum unit frequency")->required();
  b->add_option("--out", out_path, "Vocabulary file")->required();

  auto* e = app.add_subcommand("encode", "Text lines to id lines");
  auto* d = app.add_subcommand("decode", "Id lines to text lines");
  for (auto* sub : {e, d}) {
    sub->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    sub->add_option("--in", in_path, "Input file (default stdin)");
    sub->add_option("--out", stream_out, "Output file (default stdout)");
  }

  CLI11_PARSE(app, argc, argv);
  return cli::guarded("tokenizer", [&] {
    if (b->parsed()) return build(in_dir, min_count, out_path);
    if (e->parsed()) return encode(vocab_path, in_path, stream_out);
    return decode(vocab_path, in_path, stream_out);
  });
}
