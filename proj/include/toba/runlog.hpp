#pragma once

// log.jsonl: the first line is {"header": {...}} with both configs embedded,
// then one TrainStepRecord object per line.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "toba/config_io.hpp"
#include "toba/train.hpp"

namespace toba::train {

struct RunLog {
  json header;
  std::vector<TrainStepRecord> records;
};

json make_log_header(const nn::ModelConfig& mcfg, const TrainConfig& tcfg);
std::string format_record(const TrainStepRecord& r);
TrainStepRecord parse_record(const std::string& line, std::size_t line_no);

// Throws IoError if unreadable, ParseError with a 1-based line number if
// malformed. Records must have strictly increasing steps.
RunLog read_log(const std::string& path);

// First logged step with loss <= threshold.
std::optional<std::size_t> steps_to_threshold(
    const std::vector<TrainStepRecord>& records, double threshold);

struct ComparisonRow {
  std::size_t step = 0;
  double loss_a = 0.0;
  double loss_b = 0.0;
};

struct ComparisonReport {
  double threshold = 0.0;
  std::optional<std::size_t> steps_a, steps_b;
  std::optional<double> step_ratio;  // steps_a / steps_b
  std::optional<double> efficiency;  // 1 - step_ratio
  bool efficiency_lower_bound = false;  // b never reached the threshold
  // Steps of a that fall inside b's range, with b linearly interpolated.
  std::vector<ComparisonRow> table;
};

// With no threshold given, uses the larger of the two final losses, the
// lowest value both runs reach by their end.
ComparisonReport compare_runs(const RunLog& a, const RunLog& b,
                              std::optional<double> threshold = std::nullopt);

json report_to_json(const ComparisonReport& r);

}  // namespace toba::train
