#pragma once

// Convergence analytics over loss and gradient-norm series: log-log line
// fits, two-segment breakpoint search, area between curves, step
// efficiency and threshold crossings.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toba/runlog.hpp"

namespace toba::analysis {

struct LossCurve {
  std::vector<double> steps;
  std::vector<double> losses;

  // Throws InsufficientData (< 2 points) or RangeError (steps not strictly
  // increasing, mismatched lengths).
  void validate() const;
  static LossCurve from_records(const std::vector<train::TrainStepRecord>& r);
};

using StepRange = std::pair<double, double>;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;  // log(loss) at log(step) = 0
  double r2 = 1.0;
  double slope_stderr = 0.0;
  double residual_ss = 0.0;
  std::size_t n = 0;
};

// Least squares on (ln step, ln loss) over points with step in `range`.
// Throws InsufficientData for fewer than 2 points, RangeError if a step
// is < 1 or a loss <= 0.
LineFit fit_power_law(const LossCurve& curve,
                      std::optional<StepRange> range = std::nullopt);

// Same fit on already-logged coordinates.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct PhaseFit {
  LineFit first, second;
  std::size_t split = 0;     // first index of the second segment
  double breakpoint = 0.0;   // steps[split]
  double residual = 0.0;     // first.residual_ss + second.residual_ss
  double single_residual = 0.0;
  double improvement = 0.0;  // 1 - residual / single_residual
  bool has_transition = false;
};

// Exhaustive scan over split indices with at least `min_segment` points on
// each side. has_transition is improvement >= min_improvement. Throws
// InsufficientData for fewer than 8 points or 2 * min_segment.
PhaseFit detect_transition(const LossCurve& curve, std::size_t min_segment = 3,
                           double min_improvement = 0.05);

// Integral over the shared step range of max(0, baseline - engram), both
// curves linearly interpolated; crossings are inserted so the clamp is
// exact. Throws RangeError when the ranges do not overlap.
double cut_area(const LossCurve& baseline, const LossCurve& engram,
                std::optional<StepRange> range = std::nullopt);

// 1 - steps_engram / steps_baseline. Throws RangeError unless both > 0.
double step_efficiency(double steps_engram, double steps_baseline);

// Index of the first value strictly above threshold. Throws RangeError if
// threshold <= 0.
std::optional<std::size_t> detect_switch_point(std::span<const double> norms,
                                               double threshold);

inline constexpr double kDefaultSwitchThreshold = 0.05;

struct Report {
  LossCurve run;
  std::optional<LossCurve> baseline;
  double threshold = 2.0;
  std::optional<LineFit> single_fit;
  std::optional<PhaseFit> phase;
  std::optional<double> cut_area;
  std::optional<std::size_t> steps_run, steps_baseline;
  std::optional<double> efficiency;
  bool efficiency_lower_bound = false;
  std::vector<double> gn_steps, gn_engram, gn_backbone;
  double switch_threshold = kDefaultSwitchThreshold;
  std::optional<double> switch_step;
  std::optional<double> final_loss, min_loss;
  std::vector<std::string> notes;
};

// Runs every analysis that the data supports; the others stay empty and
// leave a note.
Report analyze(const train::RunLog& run, const train::RunLog* baseline,
               double threshold,
               double switch_threshold = kDefaultSwitchThreshold);

json summary_json(const Report& r);

// Writes summary.json, loss_compare.csv, loglog_fit.csv and gradnorm.csv
// into `dir` (created if needed). Throws IoError.
void emit_plot_data(const Report& r, const std::string& dir);

inline constexpr const char* kLossCompareHeader = "step,loss,baseline_loss,cut";
inline constexpr const char* kLogLogHeader =
    "step,log_step,log_loss,segment,fit_log_loss";
inline constexpr const char* kGradNormHeader =
    "step,grad_norm_engram,grad_norm_backbone,above_threshold";

}  // namespace toba::analysis
