#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csgd/config.hpp"
#include "csgd/engine.hpp"

namespace csgd {

inline constexpr double kLogFloor = 1e-16;

// Metric names in curves.csv, in emission order.
const std::vector<std::string>& curve_metrics();

// Per-cell streams: data, init and perturbation ids from (controller name,
// rep); the master seed is the Philox key. Independent of controller order.
RunStreams cell_streams(std::uint64_t master_seed, const std::string& controller, std::size_t rep);

struct CurveRow {
  std::uint64_t k = 0;
  std::string controller;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct RestartRow {
  std::string controller;
  std::size_t rep = 0;
  RestartEvent event;
};

struct ControllerRuns {
  std::string name;
  ControllerParams resolved;
  std::vector<std::size_t> reps;
  std::vector<RunStreams> streams;
  std::vector<RunTrace> traces;  // parallel to reps
  std::size_t diverged = 0;
};

struct ComparisonResult {
  ExperimentConfig config;
  ProblemPtr problem;
  std::vector<ControllerRuns> runs;  // config order
  std::vector<CurveRow> curves;
  std::vector<std::string> warnings;
  std::size_t diverged = 0;
};

using LogFn = std::function<void(const std::string&)>;

// Mean and standard error over the finite, non-diverged values at each
// recorded iteration (k = 0 excluded). Geometric aggregation, when set,
// applies to the error-type metrics and drops non-positive values.
std::vector<CurveRow> aggregate_curves(const std::vector<ControllerRuns>& runs, bool geometric);

// Runs every controller x replication cell on a worker pool; `reps`, when
// given, replaces 0..n_reps-1. Writes nothing.
ComparisonResult run_comparison(const ExperimentConfig& cfg,
                                const std::optional<std::vector<std::size_t>>& reps = {},
                                const LogFn& log = {});

// Persists the result under cfg.output.dir per the configured formats.
void write_outputs(ComparisonResult& result, const LogFn& log = {});

struct PlotSpec {
  std::string title;
  std::string y_label;
  bool x_log = true;
  std::string metric;  // rows with other metrics are ignored
};

struct SvgResult {
  std::string text;
  std::size_t clipped = 0;  // values raised to kLogFloor
};

// Log10-y line chart, one polyline per controller and one dashed marker per
// restart row whose controller has a curve.
SvgResult render_svg(const std::vector<CurveRow>& rows, const std::vector<RestartRow>& restarts,
                     const PlotSpec& spec);

std::string curves_csv(const std::vector<CurveRow>& rows);
std::vector<CurveRow> parse_curves_csv(const std::string& text);
std::string restarts_csv(const std::vector<RestartRow>& rows);
std::vector<RestartRow> parse_restarts_csv(const std::string& text);

nlohmann::json trace_to_json(const std::string& controller, std::size_t rep,
                             const RunStreams& streams, const ControllerParams& resolved,
                             const RunTrace& trace);

// Writes the figure set for `rows` into dir; returns the number of clipped values.
std::size_t write_figures(const std::filesystem::path& dir, const std::vector<CurveRow>& rows,
                          const std::vector<RestartRow>& restarts, bool x_log);

// Re-renders figures from a persisted curves.csv (and restarts.csv next to it
// when present) into out_dir without simulating.
std::size_t plot_from_csv(const std::filesystem::path& curves_path,
                          const std::filesystem::path& out_dir, bool x_log, const LogFn& log = {});

const std::vector<std::string>& sweep_knobs();

struct SweepResult {
  std::string knob;
  std::vector<std::string> value_labels;
  std::vector<ComparisonResult> results;  // one per value
};

// One comparison per value with the knob applied to every controller that has
// it (or only `controller` when set). Seeds follow the base controller names,
// so the families are paired. Writes each value under
// <dir>/sweep_<knob>/<value>/ and an overlay figure in <dir>/sweep_<knob>/.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& knob,
                      const std::vector<double>& values,
                      const std::optional<std::string>& controller = {}, const LogFn& log = {});

std::string format_double(double v);  // shortest round-trip, "" for NaN

}  // namespace csgd
