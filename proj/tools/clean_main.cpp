// clean --in dir/ --out clean.jsonl --report audit.json
//       [--stage-off dedup]... [--config clean.json]
//
// Exit status 1 when the directory held files and none of them could be
// read.

#include <iostream>
#include <string>
#include <vector>

#include "cli_util.hpp"
#include "toba/corpus.hpp"

using namespace toba;

int main(int argc, char** argv) {
  CLI::App app{"Clean a text corpus"};
  std::string in_dir, out_path, report_path, config_path;
  std::vector<std::string> off;
  app.add_option("--in", in_dir, "Input directory (.txt and .jsonl)")->required();
  app.add_option("--out", out_path, "Cleaned records")->required();
  app.add_option("--report", report_path, "Audit report")->required();
  app.add_option("--stage-off", off, "Disable a stage (repeatable)");
  app.add_option("--config", config_path, "Pipeline config JSON");
  CLI11_PARSE(app, argc, argv);

  return cli::guarded("clean", [&] {
    corpus::PipelineConfig cfg;
    if (!config_path.empty())
      cfg = corpus::pipeline_config_from_json(read_json_file(config_path));
    cfg.disabled_stages.insert(off.begin(), off.end());
    cfg.validate();

    const auto inputs = corpus::load_inputs(in_dir);
    for (const auto& s : inputs.skipped)
      std::cerr << "clean: skipped " << s.path
                << (s.line ? ":" + std::to_string(*s.line) : "") << " (" << s.reason << ")\n";
    const auto result = corpus::run_pipeline(inputs.records, cfg);
    corpus::write_records(out_path, result);
    write_json_file(report_path, corpus::audit_json(result, cfg, &inputs));

    for (const auto& st : result.stages)
      std::cerr << "clean: " << st.name << (st.enabled ? "" : " (off)") << " dropped "
                << st.docs_dropped << " of " << st.docs_in << "\n";
    std::cerr << "clean: kept " << result.kept().size() << " of " << result.docs.size() << "\n";
    if (inputs.files_seen > 0 && inputs.files_read == 0) {
      std::cerr << "clean: no input file could be read\n";
      return 1;
    }
    return 0;
  });
}
