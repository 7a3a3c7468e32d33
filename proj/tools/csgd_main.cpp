// Command-line front end. Talks to the library only through csgd.h.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "csgd/csgd.h"

namespace {

// Exit codes are part of the interface; keep them stable.
enum Exit { kOk = 0, kVerifyFailed = 1, kConfig = 2, kDiverged = 3, kIo = 4, kInternal = 5 };

int exit_code(csgd_status s) {
  switch (s) {
    case CSGD_OK: return kOk;
    case CSGD_ERR_VERIFY_FAILED: return kVerifyFailed;
    case CSGD_ERR_CONFIG:
    case CSGD_ERR_INVALID_ARGUMENT: return kConfig;
    case CSGD_ERR_DIVERGED: return kDiverged;
    case CSGD_ERR_IO: return kIo;
    default: return kInternal;
  }
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::uint64_t> n_iters;
  std::optional<std::uint64_t> reps;
  bool full = false;
  bool json = false;
  bool quiet = false;
  std::vector<std::string> sets;
  std::string controller;
  std::uint64_t rep = 0;
  std::string knob;
  std::vector<double> values;
  std::vector<std::string> only;
  std::string curves;
  std::string x_scale = "log";
};

void log_line(const char* line, void* user) {
  const auto* o = static_cast<const Options*>(user);
  if (!o->quiet) std::cerr << "csgd: " << line << "\n";
}

int report_failure(const Options& o, csgd_status s, const std::string& context) {
  const std::string msg = csgd_last_error();
  std::cerr << "csgd: " << context << ": " << (msg.empty() ? csgd_status_name(s) : msg) << "\n";
  if (o.json)
    std::cout << "{\"status\":\"" << csgd_status_name(s) << "\",\"exit_code\":" << exit_code(s)
              << ",\"error\":\"" << json_escape(msg) << "\"}\n";
  return exit_code(s);
}

class ConfigHandle {
 public:
  ~ConfigHandle() { csgd_config_free(cfg_); }
  csgd_config* get() const { return cfg_; }
  csgd_config** out() { return &cfg_; }

 private:
  csgd_config* cfg_ = nullptr;
};

// Load, then apply overrides in a fixed order: --full, explicit flags, --set,
// and finally the seed (flag > CSGD_MASTER_SEED > file).
csgd_status prepare(const Options& o, ConfigHandle& h) {
  csgd_status s = csgd_config_load(o.config.c_str(), h.out());
  if (s != CSGD_OK) return s;
  if (o.full && (s = csgd_config_apply_full_scale(h.get())) != CSGD_OK) return s;
  if (o.n_iters &&
      (s = csgd_config_set(h.get(), "engine.n_iters", std::to_string(*o.n_iters).c_str())) != CSGD_OK)
    return s;
  if (o.reps &&
      (s = csgd_config_set(h.get(), "replication.n_reps", std::to_string(*o.reps).c_str())) != CSGD_OK)
    return s;
  if (!o.out.empty() && (s = csgd_config_set_string(h.get(), "output.dir", o.out.c_str())) != CSGD_OK)
    return s;
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "csgd: --set expects key=value, got '" << kv << "'\n";
      return CSGD_ERR_CONFIG;
    }
    s = csgd_config_set(h.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != CSGD_OK) return s;
  }
  return csgd_config_resolve_seed(h.get(), o.seed ? 1 : 0, o.seed.value_or(0), nullptr);
}

int cmd_compare(const Options& o) {
  ConfigHandle h;
  csgd_status s = prepare(o, h);
  if (s != CSGD_OK) return report_failure(o, s, "config");
  char* summary = nullptr;
  s = csgd_compare(h.get(), log_line, const_cast<Options*>(&o), &summary);
  if (s != CSGD_OK) return report_failure(o, s, "compare");
  std::cout << (o.json ? std::string(summary) : "compare finished: " + std::string(summary)) << "\n";
  csgd_string_free(summary);
  return kOk;
}

int cmd_run(const Options& o) {
  ConfigHandle h;
  csgd_status s = prepare(o, h);
  if (s != CSGD_OK) return report_failure(o, s, "config");
  char* summary = nullptr;
  s = csgd_run(h.get(), o.controller.empty() ? nullptr : o.controller.c_str(), o.rep, log_line,
               const_cast<Options*>(&o), &summary);
  if (summary) {
    std::cout << (o.json ? std::string(summary) : "run finished: " + std::string(summary)) << "\n";
    csgd_string_free(summary);
  }
  if (s != CSGD_OK) {
    const std::string msg = csgd_last_error();
    std::cerr << "csgd: run: " << msg << "\n";
    return exit_code(s);
  }
  return kOk;
}

int cmd_sweep(const Options& o) {
  ConfigHandle h;
  csgd_status s = prepare(o, h);
  if (s != CSGD_OK) return report_failure(o, s, "config");
  s = csgd_sweep(h.get(), o.knob.c_str(), o.values.data(), o.values.size(),
                 o.controller.empty() ? nullptr : o.controller.c_str(), log_line,
                 const_cast<Options*>(&o));
  if (s != CSGD_OK) return report_failure(o, s, "sweep");
  if (o.json)
    std::cout << "{\"status\":\"ok\",\"knob\":\"" << json_escape(o.knob)
              << "\",\"n_values\":" << o.values.size() << "}\n";
  else
    std::cout << "sweep over " << o.knob << " finished (" << o.values.size() << " values)\n";
  return kOk;
}

int cmd_plot(const Options& o) {
  const csgd_status s = csgd_plot(o.curves.c_str(), o.out.empty() ? nullptr : o.out.c_str(),
                                  o.x_scale == "log" ? 1 : 0, log_line, const_cast<Options*>(&o));
  if (s != CSGD_OK) return report_failure(o, s, "plot");
  if (o.json) std::cout << "{\"status\":\"ok\"}\n";
  return kOk;
}

void verify_sink(const char* name, int pass, const char* detail, void*) {
  std::cout << "{\"check\":\"" << name << "\",\"pass\":" << (pass ? "true" : "false")
            << ",\"detail\":" << detail << "}\n"
            << std::flush;
}

int cmd_verify(const Options& o) {
  std::vector<const char*> names;
  for (const auto& n : o.only) names.push_back(n.c_str());
  int all_pass = 0;
  const csgd_status s = csgd_verify(names.data(), names.size(), verify_sink, nullptr, &all_pass);
  if (s == CSGD_ERR_VERIFY_FAILED) {
    std::cerr << "csgd: verify: " << csgd_last_error() << "\n";
    return kVerifyFailed;
  }
  if (s != CSGD_OK) {
    std::cerr << "csgd: verify: " << csgd_last_error() << "\n";
    return exit_code(s);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Coupling-based convergence diagnostics for constant-stepsize SGD"};
  app.set_version_flag("--version", std::string(csgd_version()));
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Configuration file")->required();
    sub->add_option("--seed", o.seed, "Master seed (overrides CSGD_MASTER_SEED and the file)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--n-iters", o.n_iters, "Iterations per run");
    sub->add_option("--reps", o.reps, "Replications per controller");
    sub->add_flag("--full", o.full, "Full-scale sizes (n = 1e6, 1e6 iterations)");
    sub->add_option("--set", o.sets, "Extra override key=value (repeatable)");
    sub->add_flag("--json", o.json, "Machine-readable result on stdout");
    sub->add_flag("-q,--quiet", o.quiet, "No progress lines on stderr");
  };

  auto* run = app.add_subcommand("run", "Single controller, single replication");
  add_common(run);
  run->add_option("--controller", o.controller, "Controller name (default: the first)");
  run->add_option("--rep", o.rep, "Replication index");

  auto* compare = app.add_subcommand("compare", "All controllers x replications");
  add_common(compare);

  auto* sweep = app.add_subcommand("sweep", "Repeat compare over values of one knob");
  add_common(sweep);
  sweep->add_option("--knob", o.knob, "r, beta0, b, eta, slope_threshold, burn_in or C")->required();
  sweep->add_option("--values", o.values, "Comma-separated values")->required()->delimiter(',');
  sweep->add_option("--controller", o.controller, "Restrict the sweep to one controller");

  auto* verify = app.add_subcommand("verify", "Closed-form self-checks, JSON lines on stdout");
  verify->add_option("--only", o.only, "Run only these checks")->delimiter(',');
  verify->add_flag("--json", o.json, "Accepted for symmetry; output is always JSON lines");
  verify->add_flag("-q,--quiet", o.quiet, "Accepted for symmetry");

  auto* plot = app.add_subcommand("plot", "Re-render figures from curves.csv");
  plot->add_option("curves", o.curves, "Path to curves.csv")->required();
  plot->add_option("--out", o.out, "Directory for the figures (default: next to the CSV)");
  plot->add_option("--x-scale", o.x_scale, "log or linear")
      ->check(CLI::IsMember({"log", "linear"}));
  plot->add_flag("--json", o.json, "Machine-readable result on stdout");
  plot->add_flag("-q,--quiet", o.quiet, "No progress lines on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (compare->parsed()) return cmd_compare(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (verify->parsed()) return cmd_verify(o);
    if (plot->parsed()) return cmd_plot(o);
  } catch (const std::exception& e) {
    std::cerr << "csgd: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
