#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "../support.hpp"
#include "csgd/harness.hpp"

using namespace csgd;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& dir) {
  auto c = config_from_json(parse_config_text(R"(
problem:
  kind: least_squares
  d: 3
  n: 400
engine:
  n_iters: 300
  trace_stride: 50
controllers:
  - kind: coupling_static
  - kind: pflug
  - kind: fixed
    name: sgd_sqrt
    schedule: inv_sqrt
replication:
  n_reps: 3
  master_seed: 11
  threads: 2
)"));
  c.output.dir = dir;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("csgd_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const CurveRow* find_row(const std::vector<CurveRow>& rows, const std::string& ctl,
                         const std::string& metric, std::uint64_t k) {
  for (const auto& r : rows)
    if (r.controller == ctl && r.metric == metric && r.k == k) return &r;
  return nullptr;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("cell streams are distinct and order independent") {
  const auto a = cell_streams(1, "coupling_static", 0);
  const auto b = cell_streams(1, "coupling_static", 1);
  const auto c = cell_streams(1, "pflug", 0);
  CHECK(a.seed == 1);
  CHECK(a.init == a.data + 1);
  CHECK(a.perturbation == a.data + 2);
  CHECK(a.data != b.data);
  CHECK(a.data != c.data);
  CHECK(cell_streams(1, "coupling_static", 0).data == a.data);
}

TEST_CASE("one replication reproduces the trace; rows cover every metric") {
  auto cfg = small_config(scratch("one").string());
  cfg.n_reps = 1;
  const auto res = run_comparison(cfg);
  const auto& run = res.runs[0];
  const std::size_t points = run.traces[0].records.size();
  CHECK(res.curves.size() == points * cfg.controllers.size() * curve_metrics().size());
  for (const auto& rec : run.traces[0].records) {
    const auto* r = find_row(res.curves, "coupling_static", "err", rec.k);
    REQUIRE(r);
    CHECK(r->mean == rec.err);
    CHECK(r->stderr_ == 0.0);
  }
}

TEST_CASE("aggregation matches a brute-force mean over the traces") {
  const auto cfg = small_config(scratch("agg").string());
  const auto res = run_comparison(cfg);
  for (const auto& cr : res.runs) {
    for (std::size_t i = 0; i < cr.traces[0].records.size(); ++i) {
      std::vector<double> errs, avgs;
      for (const auto& t : cr.traces) {
        errs.push_back(t.records[i].err);
        avgs.push_back(t.records[i].err_avg);
      }
      const auto ms = testsupport::mean_se(errs);
      const auto* r = find_row(res.curves, cr.name, "err", cr.traces[0].records[i].k);
      REQUIRE(r);
      CHECK(std::abs(r->mean - ms.mean) <= 1e-12 * std::max(1.0, ms.mean));
      CHECK(std::abs(r->stderr_ - ms.se) <= 1e-12 * std::max(1.0, ms.se));
      const auto* a = find_row(res.curves, cr.name, "err_avg", cr.traces[0].records[i].k);
      CHECK(std::abs(a->mean - testsupport::mean_se(avgs).mean) <= 1e-12);
    }
  }
}

TEST_CASE("controller order does not change any controller's results") {
  auto cfg = small_config(scratch("perm").string());
  const auto a = run_comparison(cfg);
  std::swap(cfg.controllers[0], cfg.controllers[2]);
  const auto b = run_comparison(cfg);
  std::map<std::tuple<std::string, std::string, std::uint64_t>, double> ma;
  for (const auto& r : a.curves) ma[{r.controller, r.metric, r.k}] = r.mean;
  std::size_t same = 0;
  for (const auto& r : b.curves) {
    const double v = ma.at({r.controller, r.metric, r.k});
    same += (std::isnan(v) && std::isnan(r.mean)) || v == r.mean;
  }
  CHECK(same == b.curves.size());
}

TEST_CASE("geometric aggregation") {
  ControllerRuns cr;
  cr.name = "x";
  for (double e : {1e-2, 1e-4}) {
    RunTrace t;
    TraceRecord r;
    r.k = 10;
    r.err = e;
    r.err_avg = r.gap_avg = r.dist = r.statistic = std::nan("");
    r.gamma = 0.1;
    t.records.push_back(r);
    cr.traces.push_back(t);
    cr.reps.push_back(cr.reps.size());
  }
  const auto rows = aggregate_curves({cr}, true);
  const auto* g = find_row(rows, "x", "err", 10);
  REQUIRE(g);
  CHECK(g->mean == doctest::Approx(1e-3).epsilon(1e-12));
  const auto arith = aggregate_curves({cr}, false);
  CHECK(find_row(arith, "x", "err", 10)->mean == doctest::Approx(0.00505));
  CHECK(find_row(arith, "x", "gamma", 10)->mean == 0.1);
  CHECK(std::isnan(find_row(arith, "x", "dist", 10)->mean));
}

TEST_CASE("csv round trip, quoting and the empty file") {
  CHECK(curves_csv({}) == "iteration,controller,metric,mean,stderr\n");
  std::vector<CurveRow> rows{{1, "plain", "err", 0.125, 0.0},
                             {2, "with,comma", "err", 1e-300, 3.5e-7},
                             {3, "with \"quote\"", "gamma", 0.1, 0.0},
                             {4, "nan", "dist", std::nan(""), std::nan("")}};
  const std::string text = curves_csv(rows);
  CHECK(text.find("\"with,comma\"") != std::string::npos);
  CHECK(text.find("\"with \"\"quote\"\"\"") != std::string::npos);
  const auto back = parse_curves_csv(text);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].k == rows[i].k);
    CHECK(back[i].controller == rows[i].controller);
    CHECK(back[i].mean == rows[i].mean);
    CHECK(back[i].stderr_ == rows[i].stderr_);
  }
  CHECK(std::isnan(back[3].mean));
  CHECK(curves_csv(back) == text);

  std::vector<RestartRow> rr{{"a,b", 2, RestartEvent{17, 0.5, 0.25, 0.003}}};
  const auto rback = parse_restarts_csv(restarts_csv(rr));
  REQUIRE(rback.size() == 1);
  CHECK(rback[0].controller == "a,b");
  CHECK(rback[0].event.k == 17);
  CHECK(rback[0].event.statistic == 0.003);
  CHECK_THROWS_AS(parse_curves_csv("nope\n1,2\n"), Error);
}

TEST_CASE("svg: well formed, restart markers, flat curve, clipping") {
  std::vector<CurveRow> rows;
  for (std::uint64_t k : {1, 10, 100}) rows.push_back({k, "flat", "err", 0.5, 0.0});
  rows.push_back({1, "other", "err", 1.0, 0.0});
  rows.push_back({10, "other", "err", 0.0, 0.0});
  rows.push_back({100, "other", "err", 1e-3, 0.0});
  rows.push_back({10, "other", "gamma", 7.0, 0.0});
  std::vector<RestartRow> rr{{"flat", 0, RestartEvent{10, 1, 0.5, 0}},
                             {"other", 0, RestartEvent{50, 1, 0.5, 0}},
                             {"missing", 0, RestartEvent{60, 1, 0.5, 0}}};
  const auto svg = render_svg(rows, rr, PlotSpec{"t", "error", true, "err"});
  CHECK(svg.text.rfind("<?xml", 0) == 0);
  CHECK(svg.text.find("</svg>") != std::string::npos);
  CHECK(count(svg.text, "<polyline") == 2);
  CHECK(count(svg.text, "class=\"restart\"") == 2);
  CHECK(svg.clipped == 1);
  CHECK(count(svg.text, "<svg") == 1);
  CHECK(count(svg.text, "<") == count(svg.text, ">"));
  const auto empty = render_svg({}, {}, PlotSpec{"t", "error", true, "err"});
  CHECK(empty.text.find("no data") != std::string::npos);
}

TEST_CASE("outputs on disk and plot idempotence") {
  const fs::path dir = scratch("out");
  auto cfg = small_config(dir.string());
  auto res = run_comparison(cfg);
  write_outputs(res);
  for (const char* f : {"effective_config.json", "curves.csv", "restarts.csv", "summary.json",
                        "figure_error.svg", "figure_stepsize.svg", "traces/pflug_2.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  const auto trace = nlohmann::json::parse(slurp(dir / "traces/coupling_static_1.json"));
  const auto& t1 = res.runs[0].traces[1];
  CHECK(trace["records"].size() == t1.records.size());
  CHECK(trace["records"].back()["err"].get<double>() == t1.records.back().err);

  // Re-rendering from the CSV reproduces the figures byte for byte.
  const fs::path again = scratch("replot");
  plot_from_csv(dir / "curves.csv", again, true);
  CHECK(slurp(again / "figure_error.svg") == slurp(dir / "figure_error.svg"));
  CHECK(slurp(again / "figure_stepsize.svg") == slurp(dir / "figure_stepsize.svg"));
  CHECK_THROWS_AS(plot_from_csv(dir / "nope.csv", again, true), Error);
}

TEST_CASE("a sweep over the default value matches compare") {
  const fs::path dir = scratch("sweep");
  auto cfg = small_config(dir.string());
  cfg.controllers.erase(cfg.controllers.begin() + 1, cfg.controllers.end());
  const auto base = run_comparison(cfg);
  const auto sw = run_sweep(cfg, "r", {0.5});
  REQUIRE(sw.results.size() == 1);
  const auto& a = base.curves;
  const auto& b = sw.results[0].curves;
  REQUIRE(a.size() == b.size());
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    same += (std::isnan(a[i].mean) && std::isnan(b[i].mean)) || a[i].mean == b[i].mean;
  CHECK(same == a.size());
  CHECK(fs::exists(dir / "sweep_r" / "curves.csv"));
  CHECK(fs::exists(dir / "sweep_r" / "figure_sweep.svg"));
  CHECK_THROWS_AS(run_sweep(cfg, "nope", {1.0}), Error);
  CHECK_THROWS_AS(run_sweep(cfg, "r", {}), Error);
}

TEST_CASE("format_double") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")) == "");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

}
