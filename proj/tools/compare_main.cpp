// compare --a run1/log.jsonl --b run2/log.jsonl --report report.json
//         [--threshold L]

#include <iostream>
#include <optional>
#include <string>

#include "cli_util.hpp"
#include "toba/runlog.hpp"

using namespace toba;

int main(int argc, char** argv) {
  CLI::App app{"Compare two training logs"};
  std::string a_path, b_path, report_path;
  std::optional<double> threshold;
  app.add_option("--a", a_path, "First log (usually the engram run)")->required();
  app.add_option("--b", b_path, "Second log (usually the baseline)")->required();
  app.add_option("--report", report_path, "Output JSON")->required();
  app.add_option("--threshold", threshold, "Loss threshold (default: larger final loss)");
  CLI11_PARSE(app, argc, argv);

  return cli::guarded("compare", [&] {
    const auto a = train::read_log(a_path);
    const auto b = train::read_log(b_path);
    const auto r = train::compare_runs(a, b, threshold);
    write_json_file(report_path, train::report_to_json(r));
    std::cerr << "compare: threshold " << r.threshold;
    if (r.step_ratio)
      std::cerr << ", step ratio " << *r.step_ratio << ", efficiency " << *r.efficiency
                << (r.efficiency_lower_bound ? " (lower bound)" : "");
    std::cerr << "\n";
    return 0;
  });
}
