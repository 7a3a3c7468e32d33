#include "csgd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "csgd/rng.hpp"

namespace csgd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool error_metric(const std::string& m) {
  return m == "err" || m == "err_avg" || m == "gap_avg" || m == "dist";
}

double metric_of(const TraceRecord& r, std::size_t idx) {
  switch (idx) {
    case 0: return r.err;
    case 1: return r.err_avg;
    case 2: return r.gap_avg;
    case 3: return r.dist;
    case 4: return r.gamma;
    default: return r.statistic;
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- CSV ------------------------------------------------------------------

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(field);
        rows.push_back(row);
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) fail(ErrorCode::Io, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s.empty()) return kNaN;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCode::Io, "bad number '" + s + "' in " + what);
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    fail(ErrorCode::Io, "bad integer '" + s + "' in " + what);
  return v;
}

// ---- SVG ------------------------------------------------------------------

std::string fixed2(double v) {
  char buf[64];
  if (std::abs(v) < 0.005) v = 0.0;
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  (void)ec;
  return std::string(buf, ptr);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0;
  return nice * mag;
}

std::string tick_label(double v) {
  const std::string s = format_double(v);
  return s.empty() ? "0" : s;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

const std::vector<std::string>& curve_metrics() {
  static const std::vector<std::string> m{"err", "err_avg", "gap_avg", "dist", "gamma", "statistic"};
  return m;
}

RunStreams cell_streams(std::uint64_t master_seed, const std::string& controller, std::size_t rep) {
  const std::uint64_t h = fnv1a64(std::span<const char>(controller.data(), controller.size()));
  const std::uint64_t base = mix64(h ^ mix64(static_cast<std::uint64_t>(rep))) & 0x7FFFFFFFFFFFFFF0ULL;
  RunStreams s;
  s.seed = master_seed;
  s.data = base;
  s.init = base + 1;
  s.perturbation = base + 2;
  return s;
}

std::vector<CurveRow> aggregate_curves(const std::vector<ControllerRuns>& runs, bool geometric) {
  std::vector<CurveRow> rows;
  const auto& metrics = curve_metrics();
  for (const auto& cr : runs) {
    std::vector<const RunTrace*> ok;
    for (const auto& t : cr.traces)
      if (!t.diverged) ok.push_back(&t);
    if (ok.empty()) continue;
    std::size_t n_rec = ok.front()->records.size();
    for (const auto* t : ok) n_rec = std::min(n_rec, t->records.size());
    for (std::size_t i = 0; i < n_rec; ++i) {
      const std::uint64_t k = ok.front()->records[i].k;
      if (k == 0) continue;
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        const bool geo = geometric && error_metric(metrics[m]);
        std::vector<double> xs;
        for (const auto* t : ok) {
          const double v = metric_of(t->records[i], m);
          if (!std::isfinite(v)) continue;
          if (geo) {
            if (v > 0.0) xs.push_back(std::log(v));
          } else {
            xs.push_back(v);
          }
        }
        CurveRow row{k, cr.name, metrics[m], kNaN, kNaN};
        if (!xs.empty()) {
          double mean = 0.0;
          for (double x : xs) mean += x;
          mean /= static_cast<double>(xs.size());
          double se = 0.0;
          if (xs.size() > 1) {
            double ss = 0.0;
            for (double x : xs) ss += (x - mean) * (x - mean);
            se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
          }
          if (geo) {
            row.mean = std::exp(mean);
            row.stderr_ = row.mean * se;  // delta method
          } else {
            row.mean = mean;
            row.stderr_ = se;
          }
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

ComparisonResult run_comparison(const ExperimentConfig& cfg,
                                const std::optional<std::vector<std::size_t>>& reps,
                                const LogFn& log) {
  if (cfg.controllers.empty()) fail(ErrorCode::Config, "controllers: need at least one controller");
  ComparisonResult res;
  res.config = cfg;
  res.problem = make_problem(cfg.problem_options());

  std::vector<std::size_t> rep_ids;
  if (reps) {
    rep_ids = *reps;
  } else {
    for (std::size_t r = 0; r < cfg.n_reps; ++r) rep_ids.push_back(r);
  }

  std::set<std::pair<std::uint64_t, std::uint64_t>> used;
  for (const auto& spec : cfg.controllers) {
    ControllerRuns cr;
    cr.name = spec.name;
    cr.resolved = resolve_params(spec.params, *res.problem);
    cr.reps = rep_ids;
    for (std::size_t r : rep_ids) {
      const RunStreams s = cell_streams(cfg.master_seed, spec.name, r);
      for (std::uint64_t id : {s.data, s.init, s.perturbation})
        if (!used.insert({s.seed, id}).second)
          fail(ErrorCode::Config, "stream id collision for controller '" + spec.name + "'");
      cr.streams.push_back(s);
    }
    cr.traces.resize(rep_ids.size());
    res.runs.push_back(std::move(cr));
  }

  struct Cell {
    std::size_t c, i;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < res.runs.size(); ++c)
    for (std::size_t i = 0; i < rep_ids.size(); ++i) cells.push_back({c, i});

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, cells.size())));
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= cells.size()) return;
      const Cell& cell = cells[j];
      ControllerRuns& cr = res.runs[cell.c];
      try {
        cr.traces[cell.i] = run_engine(res.problem, cr.resolved, cfg.engine, cr.streams[cell.i]);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& cr : res.runs) {
    for (std::size_t i = 0; i < cr.traces.size(); ++i) {
      if (!cr.traces[i].diverged) continue;
      ++cr.diverged;
      res.warnings.push_back(cr.name + " rep " + std::to_string(cr.reps[i]) +
                             " diverged at k = " + std::to_string(cr.traces[i].final_k) + ": " +
                             cr.traces[i].failure);
    }
    res.diverged += cr.diverged;
    if (cr.diverged > 0 && cr.diverged == cr.traces.size())
      res.warnings.push_back(cr.name + ": every replication diverged; no curves");
    if (log)
      log(cr.name + ": " + std::to_string(cr.traces.size()) + " runs, " +
          std::to_string(cr.diverged) + " diverged");
  }
  if (res.diverged > 0 && log)
    log(std::to_string(res.diverged) + " diverged run(s) excluded from aggregation");
  res.curves = aggregate_curves(res.runs, cfg.output.geometric_mean);
  return res;
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = "iteration,controller,metric,mean,stderr\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k);
    out += ',';
    out += csv_field(r.controller);
    out += ',';
    out += csv_field(r.metric);
    out += ',';
    out += format_double(r.mean);
    out += ',';
    out += format_double(r.stderr_);
    out += '\n';
  }
  return out;
}

std::vector<CurveRow> parse_curves_csv(const std::string& text) {
  const auto table = parse_csv(text);
  if (table.empty() || table[0] != std::vector<std::string>{"iteration", "controller", "metric",
                                                            "mean", "stderr"})
    fail(ErrorCode::Io, "curves CSV lacks the iteration,controller,metric,mean,stderr header");
  std::vector<CurveRow> rows;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& t = table[i];
    const std::string where = "curves CSV line " + std::to_string(i + 1);
    if (t.size() != 5) fail(ErrorCode::Io, where + ": expected 5 fields");
    rows.push_back({parse_u64(t[0], where), t[1], t[2], parse_double(t[3], where),
                    parse_double(t[4], where)});
  }
  return rows;
}

std::string restarts_csv(const std::vector<RestartRow>& rows) {
  std::string out = "controller,rep,k,old_gamma,new_gamma,statistic\n";
  for (const auto& r : rows) {
    out += csv_field(r.controller) + ',' + std::to_string(r.rep) + ',' + std::to_string(r.event.k) +
           ',' + format_double(r.event.old_gamma) + ',' + format_double(r.event.new_gamma) + ',' +
           format_double(r.event.statistic) + '\n';
  }
  return out;
}

std::vector<RestartRow> parse_restarts_csv(const std::string& text) {
  const auto table = parse_csv(text);
  if (table.empty() || table[0].size() != 6 || table[0][0] != "controller")
    fail(ErrorCode::Io, "restarts CSV lacks its header");
  std::vector<RestartRow> rows;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& t = table[i];
    const std::string where = "restarts CSV line " + std::to_string(i + 1);
    if (t.size() != 6) fail(ErrorCode::Io, where + ": expected 6 fields");
    RestartRow r;
    r.controller = t[0];
    r.rep = parse_u64(t[1], where);
    r.event.k = parse_u64(t[2], where);
    r.event.old_gamma = parse_double(t[3], where);
    r.event.new_gamma = parse_double(t[4], where);
    r.event.statistic = parse_double(t[5], where);
    rows.push_back(r);
  }
  return rows;
}

SvgResult render_svg(const std::vector<CurveRow>& rows, const std::vector<RestartRow>& restarts,
                     const PlotSpec& spec) {
  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> pts;  // (k, value)
  };
  SvgResult res;
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    if (r.metric != spec.metric) continue;
    auto it = index.find(r.controller);
    if (it == index.end()) {
      it = index.emplace(r.controller, series.size()).first;
      series.push_back({r.controller, {}});
    }
    if (!std::isfinite(r.mean)) continue;
    if (spec.x_log && r.k == 0) continue;
    double v = r.mean;
    if (!(v >= kLogFloor)) {
      v = kLogFloor;
      ++res.clipped;
    }
    series[it->second].pts.emplace_back(static_cast<double>(r.k), v);
  }
  std::vector<const RestartRow*> markers;
  for (const auto& r : restarts)
    if (index.count(r.controller) && (!spec.x_log || r.event.k > 0)) markers.push_back(&r);

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (const auto& [k, v] : s.pts) {
      xmin = std::min(xmin, k);
      xmax = std::max(xmax, k);
      ymin = std::min(ymin, std::log10(v));
      ymax = std::max(ymax, std::log10(v));
    }
  for (const auto* m : markers) {
    xmin = std::min(xmin, static_cast<double>(m->event.k));
    xmax = std::max(xmax, static_cast<double>(m->event.k));
  }
  const bool empty = !std::isfinite(xmin);
  if (empty) {
    xmin = 1.0;
    xmax = 10.0;
  }
  if (!std::isfinite(ymin)) {
    ymin = -1.0;
    ymax = 0.0;
  }
  // axis ranges
  double ax0, ax1;
  if (spec.x_log) {
    ax0 = std::floor(std::log10(xmin));
    ax1 = std::ceil(std::log10(xmax));
    if (ax1 <= ax0) ax1 = ax0 + 1.0;
  } else {
    ax0 = xmin;
    ax1 = xmax;
    if (ax1 <= ax0) {
      ax0 -= 1.0;
      ax1 += 1.0;
    }
  }
  double ay0 = std::floor(ymin), ay1 = std::ceil(ymax);
  if (ay1 <= ay0) ay1 = ay0 + 1.0;

  const double W = 760, H = 480, left = 80, right = 220, top = 40, bottom = 56;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double k) {
    const double t = spec.x_log ? std::log10(k) : k;
    return left + (t - ax0) / (ax1 - ax0) * pw;
  };
  auto py = [&](double v) { return top + (ay1 - std::log10(v)) / (ay1 - ay0) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\""
    << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<title>" << xml_escape(spec.title) << "</title>\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"#ffffff\"/>\n"
    << "<g font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<text x=\"" << fixed2(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
    << xml_escape(spec.title) << "</text>\n";

  // y ticks at decades
  const int ny = static_cast<int>(ay1 - ay0);
  const int ystep = std::max(1, (ny + 9) / 10);
  for (int e = static_cast<int>(ay0); e <= static_cast<int>(ay1); e += ystep) {
    const double y = top + (ay1 - e) / (ay1 - ay0) * ph;
    o << "<line x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(y) << "\" x2=\"" << fixed2(left + pw)
      << "\" y2=\"" << fixed2(y) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n"
      << "<text x=\"" << fixed2(left - 6) << "\" y=\"" << fixed2(y + 4)
      << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  // x ticks
  std::vector<std::pair<double, std::string>> xt;
  if (spec.x_log) {
    const int nx = static_cast<int>(ax1 - ax0);
    const int xstep = std::max(1, (nx + 9) / 10);
    for (int e = static_cast<int>(ax0); e <= static_cast<int>(ax1); e += xstep)
      xt.emplace_back(left + (e - ax0) / (ax1 - ax0) * pw, "1e" + std::to_string(e));
  } else {
    const double step = nice_step(ax1 - ax0, 6);
    for (double t = std::ceil(ax0 / step) * step; t <= ax1 + 1e-9 * step; t += step)
      xt.emplace_back(left + (t - ax0) / (ax1 - ax0) * pw, tick_label(t));
  }
  for (const auto& [x, label] : xt) {
    o << "<line x1=\"" << fixed2(x) << "\" y1=\"" << fixed2(top + ph) << "\" x2=\"" << fixed2(x)
      << "\" y2=\"" << fixed2(top + ph + 5) << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n"
      << "<text x=\"" << fixed2(x) << "\" y=\"" << fixed2(top + ph + 18)
      << "\" text-anchor=\"middle\">" << xml_escape(label) << "</text>\n";
  }
  o << "<rect x=\"" << fixed2(left) << "\" y=\"" << fixed2(top) << "\" width=\"" << fixed2(pw)
    << "\" height=\"" << fixed2(ph) << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n"
    << "<text x=\"" << fixed2(left + pw / 2) << "\" y=\"" << fixed2(H - 12)
    << "\" text-anchor=\"middle\">iteration</text>\n"
    << "<text x=\"18\" y=\"" << fixed2(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << fixed2(top + ph / 2) << ")\">" << xml_escape(spec.y_label) << "</text>\n";
  if (empty)
    o << "<text x=\"" << fixed2(left + pw / 2) << "\" y=\"" << fixed2(top + ph / 2)
      << "\" text-anchor=\"middle\">no data</text>\n";

  for (const auto* m : markers) {
    const std::size_t si = index.at(m->controller);
    const double x = px(static_cast<double>(m->event.k));
    o << "<line class=\"restart\" x1=\"" << fixed2(x) << "\" y1=\"" << fixed2(top) << "\" x2=\""
      << fixed2(x) << "\" y2=\"" << fixed2(top + ph) << "\" stroke=\"" << kPalette[si % 10]
      << "\" stroke-width=\"1\" stroke-dasharray=\"4,3\" stroke-opacity=\"0.6\"/>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.pts.empty()) continue;
    o << "<polyline fill=\"none\" stroke=\"" << kPalette[si % 10] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.pts.size(); ++i) {
      if (i) o << ' ';
      o << fixed2(px(s.pts[i].first)) << ',' << fixed2(py(s.pts[i].second));
    }
    o << "\"/>\n";
  }
  // legend
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double y = top + 12 + 18.0 * static_cast<double>(si);
    const double x = left + pw + 16;
    o << "<line x1=\"" << fixed2(x) << "\" y1=\"" << fixed2(y) << "\" x2=\"" << fixed2(x + 24)
      << "\" y2=\"" << fixed2(y) << "\" stroke=\"" << kPalette[si % 10] << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << fixed2(x + 30) << "\" y=\"" << fixed2(y + 4) << "\">"
      << xml_escape(series[si].name) << "</text>\n";
  }
  o << "</g>\n</svg>\n";
  res.text = o.str();
  return res;
}

std::size_t write_figures(const fs::path& dir, const std::vector<CurveRow>& rows,
                          const std::vector<RestartRow>& restarts, bool x_log) {
  // Markers come from the first replication of each controller.
  std::map<std::string, std::size_t> first_rep;
  for (const auto& r : restarts) {
    auto it = first_rep.find(r.controller);
    if (it == first_rep.end() || r.rep < it->second) first_rep[r.controller] = r.rep;
  }
  std::vector<RestartRow> marks;
  for (const auto& r : restarts)
    if (r.rep == first_rep[r.controller]) marks.push_back(r);

  std::size_t clipped = 0;
  auto emit = [&](const char* file, const char* title, const char* ylabel, const char* metric,
                  bool markers) {
    PlotSpec spec{title, ylabel, x_log, metric};
    SvgResult s = render_svg(rows, markers ? marks : std::vector<RestartRow>{}, spec);
    clipped += s.clipped;
    write_file(dir / file, s.text);
  };
  emit("figure_error.svg", "last-iterate error", "|theta_k - theta*|^2", "err", true);
  const bool has_avg = std::any_of(rows.begin(), rows.end(), [](const CurveRow& r) {
    return r.metric == "err_avg" && std::isfinite(r.mean);
  });
  if (has_avg)
    emit("figure_error_avg.svg", "averaged-iterate error", "|avg_k - theta*|^2", "err_avg", true);
  emit("figure_stepsize.svg", "stepsize", "gamma_k", "gamma", true);
  return clipped;
}

json trace_to_json(const std::string& controller, std::size_t rep, const RunStreams& streams,
                   const ControllerParams& p, const RunTrace& trace) {
  auto rec = [](const TraceRecord& r) {
    return json{{"k", r.k},           {"gamma", r.gamma},     {"statistic", r.statistic},
                {"err", r.err},       {"err_avg", r.err_avg}, {"gap_avg", r.gap_avg},
                {"dist", r.dist},     {"restart", r.restart}};
  };
  json records = json::array();
  for (const auto& r : trace.records) records.push_back(rec(r));
  json restarts = json::array();
  for (const auto& e : trace.restarts)
    restarts.push_back({{"k", e.k},
                        {"old_gamma", e.old_gamma},
                        {"new_gamma", e.new_gamma},
                        {"statistic", e.statistic}});
  ExperimentConfig tmp;
  tmp.controllers = {{controller, p}};
  json params = config_to_json(tmp)["controllers"][0];
  params["average"] = p.average;
  // inf does not exist in JSON; non-finite numbers become null.
  auto finite_or_null = [](json& j, auto&& self) -> void {
    if (j.is_number_float() && !std::isfinite(j.get<double>())) j = nullptr;
    else if (j.is_structured())
      for (auto& v : j) self(v, self);
  };
  json out{{"controller", controller},
           {"rep", rep},
           {"streams",
            {{"seed", streams.seed},
             {"data", streams.data},
             {"init", streams.init},
             {"perturbation", streams.perturbation}}},
           {"params", params},
           {"diverged", trace.diverged},
           {"failure", trace.failure},
           {"final_k", trace.final_k},
           {"initial", rec(trace.initial)},
           {"records", records},
           {"restarts", restarts},
           {"final_theta", trace.final_theta.values()},
           {"final_avg", trace.final_avg.values()}};
  finite_or_null(out, finite_or_null);
  return out;
}

namespace {

json summary_json(const ComparisonResult& res) {
  const auto& c = res.problem->constants();
  const auto& ref = res.problem->reference();
  json problem{{"kind", std::string(to_string(res.problem->kind()))},
               {"d", res.problem->dim()},
               {"n", res.problem->n()},
               {"seed", res.problem->seed()},
               {"L", c.L},
               {"mu", c.mu},
               {"sigma_sq", c.sigma_sq},
               {"r_sq", c.r_sq},
               {"f_star", ref.f_star},
               {"reference",
                ref.provenance == ReferenceSolution::Provenance::ClosedForm ? "closed_form"
                                                                            : "high_accuracy_solve"}};
  json ctrls = json::array();
  for (const auto& cr : res.runs) {
    std::vector<double> err, err_avg, gap, first, count;
    for (const auto& t : cr.traces) {
      if (t.diverged) continue;
      if (!t.records.empty()) {
        err.push_back(t.records.back().err);
        err_avg.push_back(t.records.back().err_avg);
        gap.push_back(t.records.back().gap_avg);
      }
      if (!t.restarts.empty()) first.push_back(static_cast<double>(t.restarts.front().k));
      count.push_back(static_cast<double>(t.restarts.size()));
    }
    auto stat = [](const std::vector<double>& xs) {
      std::vector<double> f;
      for (double x : xs)
        if (std::isfinite(x)) f.push_back(x);
      if (f.empty()) return json{{"mean", nullptr}, {"stderr", nullptr}, {"n", 0}};
      double m = 0.0;
      for (double x : f) m += x;
      m /= static_cast<double>(f.size());
      double se = 0.0;
      if (f.size() > 1) {
        double ss = 0.0;
        for (double x : f) ss += (x - m) * (x - m);
        se = std::sqrt(ss / static_cast<double>(f.size() - 1) / static_cast<double>(f.size()));
      }
      return json{{"mean", m}, {"stderr", se}, {"n", f.size()}};
    };
    ExperimentConfig tmp;
    tmp.controllers = {{cr.name, cr.resolved}};
    json params = config_to_json(tmp)["controllers"][0];
    ctrls.push_back({{"name", cr.name},
                     {"resolved_params", params},
                     {"n_runs", cr.traces.size()},
                     {"n_diverged", cr.diverged},
                     {"final_err", stat(err)},
                     {"final_err_avg", stat(err_avg)},
                     {"final_gap_avg", stat(gap)},
                     {"first_restart_k", stat(first)},
                     {"restart_count", stat(count)}});
  }
  return json{{"problem", problem},
              {"n_iters", res.config.engine.n_iters},
              {"master_seed", res.config.master_seed},
              {"controllers", ctrls},
              {"n_diverged", res.diverged},
              {"warnings", res.warnings}};
}

std::vector<RestartRow> collect_restarts(const ComparisonResult& res) {
  std::vector<RestartRow> rows;
  for (const auto& cr : res.runs)
    for (std::size_t i = 0; i < cr.traces.size(); ++i)
      for (const auto& e : cr.traces[i].restarts) rows.push_back({cr.name, cr.reps[i], e});
  return rows;
}

}  // namespace

void write_outputs(ComparisonResult& res, const LogFn& log) {
  const fs::path dir = res.config.output.dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
  write_file(dir / "effective_config.json", dump(config_to_json(res.config)));
  const auto restarts = collect_restarts(res);
  if (res.config.output.csv) {
    write_file(dir / "curves.csv", curves_csv(res.curves));
    write_file(dir / "restarts.csv", restarts_csv(restarts));
  }
  if (res.config.output.svg) {
    const std::size_t clipped = write_figures(dir, res.curves, restarts, res.config.output.x_log);
    if (clipped > 0) {
      const std::string w = std::to_string(clipped) + " plotted value(s) below 1e-16 clipped to the floor";
      res.warnings.push_back(w);
      if (log) log(w);
    }
  }
  if (res.config.output.json) {
    for (const auto& cr : res.runs)
      for (std::size_t i = 0; i < cr.traces.size(); ++i)
        write_file(dir / "traces" / (cr.name + "_" + std::to_string(cr.reps[i]) + ".json"),
                   dump(trace_to_json(cr.name, cr.reps[i], cr.streams[i], cr.resolved, cr.traces[i])));
    write_file(dir / "summary.json", dump(summary_json(res)));
  }
  if (log) log("wrote results to " + dir.string());
}

std::size_t plot_from_csv(const fs::path& curves_path, const fs::path& out_dir, bool x_log,
                          const LogFn& log) {
  const auto rows = parse_curves_csv(read_file(curves_path));
  std::vector<RestartRow> restarts;
  const fs::path rpath = curves_path.parent_path() / "restarts.csv";
  if (fs::exists(rpath)) restarts = parse_restarts_csv(read_file(rpath));
  const std::size_t clipped = write_figures(out_dir, rows, restarts, x_log);
  if (log) {
    if (clipped > 0) log(std::to_string(clipped) + " plotted value(s) below 1e-16 clipped to the floor");
    log("wrote figures to " + out_dir.string());
  }
  return clipped;
}

const std::vector<std::string>& sweep_knobs() {
  static const std::vector<std::string> k{"r", "beta0", "b", "eta", "slope_threshold", "burn_in", "C"};
  return k;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& knob,
                      const std::vector<double>& values, const std::optional<std::string>& controller,
                      const LogFn& log) {
  const auto& knobs = sweep_knobs();
  if (std::find(knobs.begin(), knobs.end(), knob) == knobs.end())
    fail(ErrorCode::Config, "knob: '" + knob + "' is not sweepable (r, beta0, b, eta, "
                            "slope_threshold, burn_in, C)");
  if (values.empty()) fail(ErrorCode::Config, "values: empty values list");
  const bool integral = knob == "b" || knob == "burn_in";

  json base = config_to_json(cfg);
  if (controller) {
    json kept = json::array();
    for (const auto& c : base["controllers"])
      if (c["name"] == *controller) kept.push_back(c);
    if (kept.empty()) fail(ErrorCode::Config, "controller: no controller named '" + *controller + "'");
    base["controllers"] = kept;
  }
  std::vector<bool> applies;
  for (const auto& c : base["controllers"]) applies.push_back(c.contains(knob));
  if (std::none_of(applies.begin(), applies.end(), [](bool b) { return b; }))
    fail(ErrorCode::Config, "knob: no selected controller has a '" + knob + "' parameter");

  SweepResult sw;
  sw.knob = knob;
  const fs::path root = fs::path(cfg.output.dir) / ("sweep_" + knob);
  std::vector<CurveRow> overlay;
  std::vector<RestartRow> overlay_restarts;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    const double v = values[vi];
    if (!std::isfinite(v)) fail(ErrorCode::Config, "values: non-finite entry");
    json tree = base;
    for (std::size_t i = 0; i < applies.size(); ++i) {
      if (!applies[i]) continue;
      if (integral) {
        if (v < 0.0 || std::floor(v) != v)
          fail(ErrorCode::Config, "values: " + knob + " takes non-negative integers");
        tree["controllers"][i][knob] = static_cast<std::uint64_t>(v);
      } else {
        tree["controllers"][i][knob] = v;
      }
    }
    const std::string label = format_double(v);
    ExperimentConfig cv = config_from_json(tree);
    cv.output.dir = (root / label).string();
    if (log) log("sweep " + knob + " = " + label);
    ComparisonResult res = run_comparison(cv, std::nullopt, log);
    write_outputs(res, log);
    std::set<std::string> swept;
    for (std::size_t i = 0; i < applies.size(); ++i)
      if (applies[i]) swept.insert(cv.controllers[i].name);
    for (const auto& row : res.curves) {
      if (!swept.count(row.controller) && vi > 0) continue;
      CurveRow r = row;
      if (swept.count(row.controller)) r.controller += "@" + knob + "=" + label;
      overlay.push_back(r);
    }
    for (const auto& row : collect_restarts(res)) {
      if (!swept.count(row.controller) && vi > 0) continue;
      RestartRow r = row;
      if (swept.count(row.controller)) r.controller += "@" + knob + "=" + label;
      overlay_restarts.push_back(r);
    }
    sw.value_labels.push_back(label);
    sw.results.push_back(std::move(res));
  }
  if (cfg.output.csv) {
    write_file(root / "curves.csv", curves_csv(overlay));
    write_file(root / "restarts.csv", restarts_csv(overlay_restarts));
  }
  if (cfg.output.svg) {
    const PlotSpec spec{"sweep over " + knob, "|theta_k - theta*|^2", cfg.output.x_log, "err"};
    write_file(root / "figure_sweep.svg", render_svg(overlay, {}, spec).text);
    const bool has_avg = std::any_of(overlay.begin(), overlay.end(), [](const CurveRow& r) {
      return r.metric == "err_avg" && std::isfinite(r.mean);
    });
    if (has_avg) {
      const PlotSpec avg{"sweep over " + knob + " (averaged iterate)", "|avg_k - theta*|^2",
                         cfg.output.x_log, "err_avg"};
      write_file(root / "figure_sweep_avg.svg", render_svg(overlay, {}, avg).text);
    }
  }
  return sw;
}

}  // namespace csgd
