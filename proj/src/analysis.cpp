#include "toba/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "toba/common.hpp"

namespace toba::analysis {

void LossCurve::validate() const {
  if (steps.size() != losses.size())
    throw RangeError("loss curve: steps and losses differ in length");
  if (steps.size() < 2) throw InsufficientData("loss curve needs >= 2 points");
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (!(steps[i] > steps[i - 1]))
      throw RangeError("loss curve: steps must be strictly increasing");
}

LossCurve LossCurve::from_records(const std::vector<train::TrainStepRecord>& r) {
  LossCurve c;
  for (const auto& x : r) {
    c.steps.push_back(static_cast<double>(x.step));
    c.losses.push_back(x.loss);
  }
  return c;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw RangeError("fit_line: length mismatch");
  if (n < 2) throw InsufficientData("fit_line needs >= 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw InsufficientData("fit_line: x values are all equal");
  LineFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    rss += e * e;
  }
  f.residual_ss = rss;
  f.r2 = syy > 0 ? std::clamp(1.0 - rss / syy, 0.0, 1.0) : 1.0;
  f.slope_stderr =
      n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  return f;
}

namespace {

void to_loglog(const LossCurve& c, std::optional<StepRange> range,
               std::vector<double>& x, std::vector<double>& y) {
  if (c.steps.size() != c.losses.size())
    throw RangeError("loss curve: steps and losses differ in length");
  for (std::size_t i = 0; i < c.steps.size(); ++i) {
    const double s = c.steps[i];
    if (range && (s < range->first || s > range->second)) continue;
    if (s < 1) throw RangeError("log-log fit needs steps >= 1");
    if (!(c.losses[i] > 0)) throw RangeError("log-log fit needs losses > 0");
    x.push_back(std::log(s));
    y.push_back(std::log(c.losses[i]));
  }
}

// Residual sum of squares of the least-squares line through points
// [a, b), from prefix sums.
struct Prefix {
  std::vector<double> n, sx, sy, sxx, sxy, syy;
  explicit Prefix(std::span<const double> x, std::span<const double> y) {
    const std::size_t m = x.size();
    for (auto* v : {&n, &sx, &sy, &sxx, &sxy, &syy}) v->assign(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      n[i + 1] = n[i] + 1;
      sx[i + 1] = sx[i] + x[i];
      sy[i + 1] = sy[i] + y[i];
      sxx[i + 1] = sxx[i] + x[i] * x[i];
      sxy[i + 1] = sxy[i] + x[i] * y[i];
      syy[i + 1] = syy[i] + y[i] * y[i];
    }
  }
  double rss(std::size_t a, std::size_t b) const {
    const double k = n[b] - n[a];
    const double X = sx[b] - sx[a], Y = sy[b] - sy[a];
    const double cxx = (sxx[b] - sxx[a]) - X * X / k;
    const double cxy = (sxy[b] - sxy[a]) - X * Y / k;
    const double cyy = (syy[b] - syy[a]) - Y * Y / k;
    return std::max(0.0, cyy - cxy * cxy / cxx);
  }
};

}  // namespace

LineFit fit_power_law(const LossCurve& curve, std::optional<StepRange> range) {
  std::vector<double> x, y;
  to_loglog(curve, range, x, y);
  return fit_line(x, y);
}

PhaseFit detect_transition(const LossCurve& curve, std::size_t min_segment,
                           double min_improvement) {
  std::vector<double> x, y;
  to_loglog(curve, std::nullopt, x, y);
  const std::size_t n = x.size();
  if (min_segment < 2) min_segment = 2;
  if (n < 8 || n < 2 * min_segment)
    throw InsufficientData("detect_transition needs >= 8 points");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x[i] > x[i - 1]))
      throw RangeError("detect_transition: steps must be strictly increasing");

  const Prefix pre(x, y);
  std::size_t best = min_segment;
  double best_rss = std::numeric_limits<double>::infinity();
  for (std::size_t k = min_segment; k + min_segment <= n; ++k) {
    const double r = pre.rss(0, k) + pre.rss(k, n);
    if (r < best_rss) {
      best_rss = r;
      best = k;
    }
  }
  PhaseFit f;
  f.split = best;
  f.breakpoint = curve.steps[best];
  f.first = fit_line(std::span(x).first(best), std::span(y).first(best));
  f.second = fit_line(std::span(x).subspan(best), std::span(y).subspan(best));
  f.residual = f.first.residual_ss + f.second.residual_ss;
  f.single_residual = fit_line(x, y).residual_ss;
  // A single line that already fits to rounding error leaves nothing to
  // improve on.
  double scale = 0.0;
  for (double v : y) scale += v * v;
  const bool exact = f.single_residual <= 1e-24 * std::max(1.0, scale);
  f.improvement = exact ? 0.0 : 1.0 - f.residual / f.single_residual;
  f.has_transition = f.improvement >= min_improvement;
  return f;
}

namespace {

double interp(const LossCurve& c, double s) {
  auto it = std::lower_bound(c.steps.begin(), c.steps.end(), s);
  if (it == c.steps.end()) return c.losses.back();
  const auto i = static_cast<std::size_t>(it - c.steps.begin());
  if (*it == s || i == 0) return c.losses[i];
  const double t = (s - c.steps[i - 1]) / (c.steps[i] - c.steps[i - 1]);
  return c.losses[i - 1] + t * (c.losses[i] - c.losses[i - 1]);
}

}  // namespace

double cut_area(const LossCurve& baseline, const LossCurve& engram,
                std::optional<StepRange> range) {
  baseline.validate();
  engram.validate();
  double lo = std::max(baseline.steps.front(), engram.steps.front());
  double hi = std::min(baseline.steps.back(), engram.steps.back());
  if (range) {
    lo = std::max(lo, range->first);
    hi = std::min(hi, range->second);
  }
  if (lo > hi) throw RangeError("cut_area: curves share no step range");
  if (lo == hi) return 0.0;

  std::vector<double> grid = {lo, hi};
  for (const auto* c : {&baseline, &engram})
    for (double s : c->steps)
      if (s > lo && s < hi) grid.push_back(s);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double area = 0.0;
  double x0 = grid[0];
  double d0 = interp(baseline, x0) - interp(engram, x0);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double x1 = grid[i];
    const double d1 = interp(baseline, x1) - interp(engram, x1);
    const double w = x1 - x0;
    if (d0 >= 0 && d1 >= 0) {
      area += 0.5 * (d0 + d1) * w;
    } else if (d0 > 0 && d1 < 0) {
      area += 0.5 * d0 * (w * d0 / (d0 - d1));
    } else if (d0 < 0 && d1 > 0) {
      area += 0.5 * d1 * (w * d1 / (d1 - d0));
    }
    x0 = x1;
    d0 = d1;
  }
  return area;
}

double step_efficiency(double steps_engram, double steps_baseline) {
  if (!(steps_engram > 0) || !(steps_baseline > 0))
    throw RangeError("step_efficiency needs positive step counts");
  return 1.0 - steps_engram / steps_baseline;
}

std::optional<std::size_t> detect_switch_point(std::span<const double> norms,
                                               double threshold) {
  if (!(threshold > 0)) throw RangeError("switch threshold must be > 0");
  for (std::size_t i = 0; i < norms.size(); ++i)
    if (norms[i] > threshold) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

LossCurve positive_steps(const LossCurve& c) {
  LossCurve out;
  for (std::size_t i = 0; i < c.steps.size(); ++i)
    if (c.steps[i] >= 1 && c.losses[i] > 0) {
      out.steps.push_back(c.steps[i]);
      out.losses.push_back(c.losses[i]);
    }
  return out;
}

std::optional<double> first_below(const LossCurve& c, double threshold) {
  for (std::size_t i = 0; i < c.steps.size(); ++i)
    if (c.losses[i] <= threshold) return c.steps[i];
  return std::nullopt;
}

}  // namespace

Report analyze(const train::RunLog& run, const train::RunLog* baseline,
               double threshold, double switch_threshold) {
  Report r;
  r.threshold = threshold;
  r.switch_threshold = switch_threshold;
  r.run = LossCurve::from_records(run.records);
  for (const auto& x : run.records) {
    r.gn_steps.push_back(static_cast<double>(x.step));
    r.gn_engram.push_back(x.grad_norm_engram);
    r.gn_backbone.push_back(x.grad_norm_backbone);
  }
  if (!r.run.losses.empty()) {
    r.final_loss = r.run.losses.back();
    r.min_loss = *std::min_element(r.run.losses.begin(), r.run.losses.end());
  }

  const LossCurve pos = positive_steps(r.run);
  if (pos.steps.size() >= 2)
    r.single_fit = fit_power_law(pos);
  else
    r.notes.push_back("power-law fit skipped: fewer than 2 points with step >= 1");
  if (pos.steps.size() >= 8)
    r.phase = detect_transition(pos);
  else
    r.notes.push_back("transition search skipped: fewer than 8 points");

  if (auto idx = detect_switch_point(r.gn_engram, switch_threshold))
    r.switch_step = r.gn_steps[*idx];

  if (const auto s = first_below(r.run, threshold))
    r.steps_run = static_cast<std::size_t>(*s);

  if (baseline) {
    r.baseline = LossCurve::from_records(baseline->records);
    const auto& b = *r.baseline;
    if (const auto s = first_below(b, threshold))
      r.steps_baseline = static_cast<std::size_t>(*s);
    if (r.run.steps.size() >= 2 && b.steps.size() >= 2) {
      try {
        r.cut_area = cut_area(b, r.run);
      } catch (const RangeError& e) {
        r.notes.push_back(std::string("cut area skipped: ") + e.what());
      }
    }
    if (r.steps_run && !b.steps.empty()) {
      double denom = r.steps_baseline ? static_cast<double>(*r.steps_baseline)
                                      : b.steps.back();
      r.efficiency_lower_bound = !r.steps_baseline;
      if (*r.steps_run > 0 && denom > 0)
        r.efficiency = step_efficiency(static_cast<double>(*r.steps_run), denom);
      else
        r.notes.push_back("step efficiency skipped: threshold met at step 0");
    }
  }
  return r;
}

namespace {

json fit_json(const LineFit& f) {
  return json{{"slope", f.slope},
              {"intercept", f.intercept},
              {"r2", f.r2},
              {"slope_stderr", f.slope_stderr},
              {"residual_ss", f.residual_ss},
              {"n", f.n}};
}

template <typename V>
json opt(const std::optional<V>& o) {
  return o ? json(*o) : json(nullptr);
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

}  // namespace

json summary_json(const Report& r) {
  json j{{"threshold", r.threshold},
         {"points", r.run.steps.size()},
         {"final_loss", opt(r.final_loss)},
         {"min_loss", opt(r.min_loss)},
         {"steps_to_threshold",
          {{"run", opt(r.steps_run)}, {"baseline", opt(r.steps_baseline)}}},
         {"step_efficiency", opt(r.efficiency)},
         {"efficiency_is_lower_bound", r.efficiency_lower_bound},
         {"cut_area", opt(r.cut_area)},
         {"power_law", r.single_fit ? fit_json(*r.single_fit) : json(nullptr)}};
  if (r.phase) {
    j["phase_fit"] = {{"breakpoint", r.phase->breakpoint},
                      {"split_index", r.phase->split},
                      {"segment1", fit_json(r.phase->first)},
                      {"segment2", fit_json(r.phase->second)},
                      {"residual", r.phase->residual},
                      {"single_residual", r.phase->single_residual},
                      {"improvement", r.phase->improvement},
                      {"has_transition", r.phase->has_transition}};
  } else {
    j["phase_fit"] = nullptr;
  }
  j["switch_point"] = {{"threshold", r.switch_threshold},
                       {"step", opt(r.switch_step)}};
  j["notes"] = r.notes;
  return j;
}

void emit_plot_data(const Report& r, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const fs::path d(dir);

  {
    auto os = open_out(d / "loss_compare.csv");
    os << kLossCompareHeader << "\n";
    for (std::size_t i = 0; i < r.run.steps.size(); ++i) {
      const double s = r.run.steps[i];
      os << num(s) << "," << num(r.run.losses[i]) << ",";
      if (r.baseline && !r.baseline->steps.empty() &&
          s >= r.baseline->steps.front() && s <= r.baseline->steps.back()) {
        const double b = interp(*r.baseline, s);
        os << num(b) << "," << num(std::max(0.0, b - r.run.losses[i]));
      } else {
        os << ",";
      }
      os << "\n";
    }
    if (!os) throw IoError("write failed: loss_compare.csv");
  }
  {
    auto os = open_out(d / "loglog_fit.csv");
    os << kLogLogHeader << "\n";
    std::size_t k = 0;
    for (std::size_t i = 0; i < r.run.steps.size(); ++i) {
      const double s = r.run.steps[i], l = r.run.losses[i];
      if (s < 1 || !(l > 0)) continue;
      const double ls = std::log(s);
      int seg = 0;
      const LineFit* f = r.single_fit ? &*r.single_fit : nullptr;
      if (r.phase) {
        seg = k < r.phase->split ? 1 : 2;
        f = seg == 1 ? &r.phase->first : &r.phase->second;
      }
      os << num(s) << "," << num(ls) << "," << num(std::log(l)) << "," << seg
         << ",";
      if (f) os << num(f->intercept + f->slope * ls);
      os << "\n";
      ++k;
    }
    if (!os) throw IoError("write failed: loglog_fit.csv");
  }
  {
    auto os = open_out(d / "gradnorm.csv");
    os << kGradNormHeader << "\n";
    for (std::size_t i = 0; i < r.gn_steps.size(); ++i)
      os << num(r.gn_steps[i]) << "," << num(r.gn_engram[i]) << ","
         << num(r.gn_backbone[i]) << ","
         << (r.gn_engram[i] > r.switch_threshold ? 1 : 0) << "\n";
    if (!os) throw IoError("write failed: gradnorm.csv");
  }
  write_json_file((d / "summary.json").string(), summary_json(r));
}

}  // namespace toba::analysis
