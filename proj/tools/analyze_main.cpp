// analyze --log run.jsonl [--baseline base.jsonl] --threshold 2.0 --out report/
//         [--switch-threshold 0.05]

#include <iostream>
#include <string>

#include "cli_util.hpp"
#include "toba/analysis.hpp"

using namespace toba;

int main(int argc, char** argv) {
  CLI::App app{"Convergence analysis of a training log"};
  std::string log_path, baseline_path, out_dir;
  double threshold = 2.0;
  double switch_threshold = analysis::kDefaultSwitchThreshold;
  app.add_option("--log", log_path, "Run log")->required();
  app.add_option("--baseline", baseline_path, "Baseline log");
  app.add_option("--threshold", threshold, "Loss threshold for step counts")->capture_default_str();
  app.add_option("--switch-threshold", switch_threshold, "Engram gradient-norm threshold")
      ->capture_default_str();
  app.add_option("--out", out_dir, "Output directory")->required();
  CLI11_PARSE(app, argc, argv);

  return cli::guarded("analyze", [&] {
    const auto run = train::read_log(log_path);
    std::optional<train::RunLog> base;
    if (!baseline_path.empty()) base = train::read_log(baseline_path);
    const auto report =
        analysis::analyze(run, base ? &*base : nullptr, threshold, switch_threshold);
    analysis::emit_plot_data(report, out_dir);
    for (const auto& n : report.notes) std::cerr << "analyze: " << n << "\n";
    std::cerr << "analyze: wrote " << out_dir << "\n";
    return 0;
  });
}
