#include "toba/runlog.hpp"

#include <cmath>
#include <fstream>

#include "toba/analysis.hpp"
#include "toba/common.hpp"

namespace toba::train {

json make_log_header(const nn::ModelConfig& mcfg, const TrainConfig& tcfg) {
  return json{{"format", "toba-log v1"},
              {"model_config", to_json(mcfg)},
              {"train_config", to_json(tcfg)}};
}

std::string format_record(const TrainStepRecord& r) {
  return json{{"step", r.step},
              {"loss", r.loss},
              {"lr_backbone", r.lr_backbone},
              {"lr_engram", r.lr_engram},
              {"grad_norm_engram", r.grad_norm_engram},
              {"grad_norm_backbone", r.grad_norm_backbone},
              {"wallclock_ms", r.wallclock_ms}}
      .dump();
}

TrainStepRecord parse_record(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("record is not an object", line_no);
  TrainStepRecord r;
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number())
      throw ParseError(std::string("missing numeric field \"") + key + "\"", line_no);
    return j.at(key).get<double>();
  };
  if (!j.contains("step") || !j.at("step").is_number_unsigned())
    throw ParseError("missing or negative \"step\"", line_no);
  r.step = j.at("step").get<std::size_t>();
  r.loss = num("loss");
  r.lr_backbone = num("lr_backbone");
  r.lr_engram = num("lr_engram");
  r.grad_norm_engram = num("grad_norm_engram");
  r.grad_norm_backbone = num("grad_norm_backbone");
  if (j.contains("wallclock_ms")) r.wallclock_ms = j.at("wallclock_ms").get<std::int64_t>();
  if (r.grad_norm_engram < 0 || r.grad_norm_backbone < 0)
    throw ParseError("negative gradient norm", line_no);
  return r;
}

RunLog read_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  RunLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      try {
        const auto j = json::parse(line);
        if (j.is_object() && j.contains("header")) {
          log.header = j.at("header");
          continue;
        }
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": invalid JSON: " + e.what(), line_no);
      }
    }
    auto r = parse_record(line, line_no);
    if (!log.records.empty() && r.step <= log.records.back().step)
      throw ParseError(path + ": steps must be strictly increasing", line_no);
    log.records.push_back(r);
  }
  return log;
}

std::optional<std::size_t> steps_to_threshold(
    const std::vector<TrainStepRecord>& records, double threshold) {
  for (const auto& r : records)
    if (r.loss <= threshold) return r.step;
  return std::nullopt;
}

ComparisonReport compare_runs(const RunLog& a, const RunLog& b,
                              std::optional<double> threshold) {
  ComparisonReport rep;
  if (a.records.empty() || b.records.empty()) {
    rep.threshold = threshold.value_or(0.0);
    return rep;
  }
  rep.threshold = threshold.value_or(
      std::max(a.records.back().loss, b.records.back().loss));
  rep.steps_a = steps_to_threshold(a.records, rep.threshold);
  rep.steps_b = steps_to_threshold(b.records, rep.threshold);

  if (rep.steps_a) {
    std::optional<double> denom;
    if (rep.steps_b) {
      denom = static_cast<double>(*rep.steps_b);
    } else {
      denom = static_cast<double>(b.records.back().step);
      rep.efficiency_lower_bound = true;
    }
    if (*denom > 0) {
      rep.step_ratio = static_cast<double>(*rep.steps_a) / *denom;
      rep.efficiency = analysis::step_efficiency(static_cast<double>(*rep.steps_a), *denom);
    } else if (*rep.steps_a == 0) {
      rep.step_ratio = 1.0;
      rep.efficiency = 0.0;
    }
  }

  // Loss-at-step table on a's grid, b interpolated inside its range.
  std::size_t j = 0;
  const auto& rb = b.records;
  for (const auto& ra : a.records) {
    if (ra.step < rb.front().step || ra.step > rb.back().step) continue;
    while (j + 1 < rb.size() && rb[j + 1].step <= ra.step) ++j;
    double lb = rb[j].loss;
    if (rb[j].step != ra.step && j + 1 < rb.size()) {
      const double t = static_cast<double>(ra.step - rb[j].step) /
                       static_cast<double>(rb[j + 1].step - rb[j].step);
      lb = rb[j].loss + t * (rb[j + 1].loss - rb[j].loss);
    }
    rep.table.push_back({ra.step, ra.loss, lb});
  }
  return rep;
}

json report_to_json(const ComparisonReport& r) {
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  json table = json::array();
  for (const auto& row : r.table)
    table.push_back({{"step", row.step}, {"loss_a", row.loss_a}, {"loss_b", row.loss_b}});
  return json{{"threshold", r.threshold},
              {"steps_to_threshold_a", opt(r.steps_a)},
              {"steps_to_threshold_b", opt(r.steps_b)},
              {"step_ratio", opt(r.step_ratio)},
              {"step_efficiency", opt(r.efficiency)},
              {"efficiency_is_lower_bound", r.efficiency_lower_bound},
              {"loss_at_step", table}};
}

}  // namespace toba::train
