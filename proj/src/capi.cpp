#include "csgd/csgd.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <limits>
#include <new>
#include <optional>
#include <string>

#include "csgd/config.hpp"
#include "csgd/engine.hpp"
#include "csgd/harness.hpp"
#include "csgd/oracle.hpp"

using nlohmann::json;

struct csgd_config {
  json tree;
};

struct csgd_session {
  std::unique_ptr<csgd::CoupledRun> run;
};

namespace {

thread_local std::string g_last_error;

csgd_status from_code(csgd::ErrorCode c) {
  using csgd::ErrorCode;
  switch (c) {
    case ErrorCode::InvalidArgument: return CSGD_ERR_INVALID_ARGUMENT;
    case ErrorCode::DimensionMismatch: return CSGD_ERR_DIMENSION;
    case ErrorCode::NumericOverflow: return CSGD_ERR_NUMERIC_OVERFLOW;
    case ErrorCode::NonConvergence: return CSGD_ERR_NON_CONVERGENCE;
    case ErrorCode::Config: return CSGD_ERR_CONFIG;
    case ErrorCode::Io: return CSGD_ERR_IO;
    case ErrorCode::Diverged: return CSGD_ERR_DIVERGED;
    case ErrorCode::DegenerateDiagnostic: return CSGD_ERR_DEGENERATE_DIAGNOSTIC;
    case ErrorCode::DegenerateDirection: return CSGD_ERR_DEGENERATE_DIRECTION;
  }
  return CSGD_ERR_INTERNAL;
}

template <class F>
csgd_status guard(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const csgd::Error& e) {
    g_last_error = e.what();
    return from_code(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CSGD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CSGD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CSGD_ERR_INTERNAL;
  }
}

csgd_status bad_arg(const char* what) {
  g_last_error = what;
  return CSGD_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

csgd::LogFn wrap_log(csgd_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

const csgd::ControllerSpec& pick_controller(const csgd::ExperimentConfig& cfg, const char* name) {
  if (!name) return cfg.controllers.front();
  for (const auto& c : cfg.controllers)
    if (c.name == name) return c;
  csgd::fail(csgd::ErrorCode::Config, std::string("controller: no controller named '") + name + "'");
}

}  // namespace

extern "C" {

const char* csgd_version(void) { return "1.0.0"; }

const char* csgd_status_name(csgd_status status) {
  switch (status) {
    case CSGD_OK: return "ok";
    case CSGD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CSGD_ERR_DIMENSION: return "dimension_mismatch";
    case CSGD_ERR_NUMERIC_OVERFLOW: return "numeric_overflow";
    case CSGD_ERR_NON_CONVERGENCE: return "non_convergence";
    case CSGD_ERR_CONFIG: return "config";
    case CSGD_ERR_IO: return "io";
    case CSGD_ERR_DIVERGED: return "diverged";
    case CSGD_ERR_DEGENERATE_DIAGNOSTIC: return "degenerate_diagnostic";
    case CSGD_ERR_DEGENERATE_DIRECTION: return "degenerate_direction";
    case CSGD_ERR_VERIFY_FAILED: return "verify_failed";
    case CSGD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* csgd_last_error(void) { return g_last_error.c_str(); }

void csgd_string_free(char* s) { std::free(s); }

csgd_status csgd_config_load(const char* path, csgd_config** out) {
  if (!path || !out) return bad_arg("null argument");
  *out = nullptr;
  return guard([&] {
    auto cfg = std::make_unique<csgd_config>();
    cfg->tree = csgd::load_config_tree(path);
    *out = cfg.release();
    return CSGD_OK;
  });
}

csgd_status csgd_config_parse(const char* text, csgd_config** out) {
  if (!text || !out) return bad_arg("null argument");
  *out = nullptr;
  return guard([&] {
    auto cfg = std::make_unique<csgd_config>();
    cfg->tree = csgd::parse_config_text(text);
    *out = cfg.release();
    return CSGD_OK;
  });
}

csgd_status csgd_config_set(csgd_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return bad_arg("null argument");
  return guard([&] {
    csgd::set_config_value(cfg->tree, key, value);
    return CSGD_OK;
  });
}

csgd_status csgd_config_set_string(csgd_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return bad_arg("null argument");
  return guard([&] {
    // Quote through YAML so the text never turns into a number or bool.
    std::string quoted = "\"";
    for (const char* p = value; *p; ++p) {
      if (*p == '"' || *p == '\\') quoted += '\\';
      quoted += *p;
    }
    quoted += '"';
    csgd::set_config_value(cfg->tree, key, quoted);
    return CSGD_OK;
  });
}

csgd_status csgd_config_apply_full_scale(csgd_config* cfg) {
  if (!cfg) return bad_arg("null argument");
  return guard([&] {
    csgd::apply_full_scale(cfg->tree);
    return CSGD_OK;
  });
}

csgd_status csgd_config_resolve_seed(csgd_config* cfg, int has_seed, uint64_t seed,
                                     uint64_t* out_seed) {
  if (!cfg) return bad_arg("null argument");
  return guard([&] {
    std::optional<std::uint64_t> s;
    if (has_seed) s = seed;
    const auto v = csgd::resolve_master_seed(cfg->tree, s);
    if (out_seed) *out_seed = v;
    return CSGD_OK;
  });
}

csgd_status csgd_config_validate(const csgd_config* cfg) {
  if (!cfg) return bad_arg("null argument");
  return guard([&] {
    (void)csgd::config_from_json(cfg->tree);
    return CSGD_OK;
  });
}

csgd_status csgd_config_to_json(const csgd_config* cfg, char** out_json) {
  if (!cfg || !out_json) return bad_arg("null argument");
  *out_json = nullptr;
  return guard([&] {
    *out_json = dup_string(csgd::config_to_json(csgd::config_from_json(cfg->tree)).dump(2));
    return CSGD_OK;
  });
}

void csgd_config_free(csgd_config* cfg) { delete cfg; }

csgd_status csgd_compare(const csgd_config* cfg, csgd_log_fn log, void* user,
                         char** out_summary_json) {
  if (!cfg) return bad_arg("null argument");
  if (out_summary_json) *out_summary_json = nullptr;
  return guard([&] {
    const auto ec = csgd::config_from_json(cfg->tree);
    auto res = csgd::run_comparison(ec, std::nullopt, wrap_log(log, user));
    csgd::write_outputs(res, wrap_log(log, user));
    if (out_summary_json) {
      json s{{"dir", ec.output.dir}, {"n_diverged", res.diverged}, {"warnings", res.warnings}};
      *out_summary_json = dup_string(s.dump());
    }
    return CSGD_OK;
  });
}

csgd_status csgd_run(const csgd_config* cfg, const char* controller, uint64_t rep, csgd_log_fn log,
                     void* user, char** out_summary_json) {
  if (!cfg) return bad_arg("null argument");
  if (out_summary_json) *out_summary_json = nullptr;
  return guard([&] {
    auto ec = csgd::config_from_json(cfg->tree);
    const csgd::ControllerSpec spec = pick_controller(ec, controller);
    ec.controllers = {spec};
    auto res = csgd::run_comparison(ec, std::vector<std::size_t>{rep}, wrap_log(log, user));
    csgd::write_outputs(res, wrap_log(log, user));
    const auto& t = res.runs.front().traces.front();
    if (out_summary_json) {
      json s{{"dir", ec.output.dir},
             {"controller", spec.name},
             {"rep", rep},
             {"final_k", t.final_k},
             {"restarts", t.restarts.size()},
             {"diverged", t.diverged}};
      if (!t.records.empty() && std::isfinite(t.records.back().err))
        s["final_err"] = t.records.back().err;
      *out_summary_json = dup_string(s.dump());
    }
    if (t.diverged) {
      g_last_error = spec.name + " diverged at k = " + std::to_string(t.final_k) + ": " + t.failure;
      return CSGD_ERR_DIVERGED;
    }
    return CSGD_OK;
  });
}

csgd_status csgd_sweep(const csgd_config* cfg, const char* knob, const double* values,
                       size_t n_values, const char* controller, csgd_log_fn log, void* user) {
  if (!cfg || !knob || (n_values > 0 && !values)) return bad_arg("null argument");
  return guard([&] {
    const auto ec = csgd::config_from_json(cfg->tree);
    std::optional<std::string> only;
    if (controller) only = controller;
    csgd::run_sweep(ec, knob, std::vector<double>(values, values + n_values), only,
                    wrap_log(log, user));
    return CSGD_OK;
  });
}

csgd_status csgd_plot(const char* curves_csv, const char* out_dir, int x_log, csgd_log_fn log,
                      void* user) {
  if (!curves_csv) return bad_arg("null argument");
  return guard([&] {
    const std::filesystem::path in(curves_csv);
    const std::filesystem::path dir =
        out_dir ? std::filesystem::path(out_dir)
                : (in.has_parent_path() ? in.parent_path() : std::filesystem::path("."));
    csgd::plot_from_csv(in, dir, x_log != 0, wrap_log(log, user));
    return CSGD_OK;
  });
}

csgd_status csgd_verify(const char* const* only, size_t n_only, csgd_verify_fn sink, void* user,
                        int* all_pass) {
  if (n_only > 0 && !only) return bad_arg("null argument");
  if (all_pass) *all_pass = 0;
  return guard([&] {
    std::vector<std::string> names;
    for (size_t i = 0; i < n_only; ++i) {
      if (!only[i]) return bad_arg("null check name");
      names.emplace_back(only[i]);
    }
    bool ok = true;
    std::string failed;
    csgd::run_verify(names, [&](const csgd::CheckResult& r) {
      if (!r.pass) {
        ok = false;
        failed += failed.empty() ? r.name : ", " + r.name;
      }
      if (sink) sink(r.name.c_str(), r.pass ? 1 : 0, r.detail.c_str(), user);
    });
    if (all_pass) *all_pass = ok ? 1 : 0;
    if (!ok) {
      g_last_error = "failed checks: " + failed;
      return CSGD_ERR_VERIFY_FAILED;
    }
    return CSGD_OK;
  });
}

csgd_status csgd_verify_names(char** out) {
  if (!out) return bad_arg("null argument");
  return guard([&] {
    std::string s;
    for (const auto& n : csgd::verify_check_names()) s += n + "\n";
    *out = dup_string(s);
    return CSGD_OK;
  });
}

csgd_status csgd_session_create(const csgd_config* cfg, const char* controller, uint64_t rep,
                                csgd_session** out) {
  if (!cfg || !out) return bad_arg("null argument");
  *out = nullptr;
  return guard([&] {
    const auto ec = csgd::config_from_json(cfg->tree);
    const auto& spec = pick_controller(ec, controller);
    auto problem = csgd::make_problem(ec.problem_options());
    auto s = std::make_unique<csgd_session>();
    s->run = std::make_unique<csgd::CoupledRun>(problem, spec.params, ec.engine,
                                                csgd::cell_streams(ec.master_seed, spec.name, rep));
    *out = s.release();
    return CSGD_OK;
  });
}

csgd_status csgd_session_step(csgd_session* s, uint64_t n_steps, uint64_t* k_out) {
  if (!s) return bad_arg("null argument");
  return guard([&] {
    for (uint64_t i = 0; i < n_steps; ++i)
      if (!s->run->step()) break;
    if (k_out) *k_out = s->run->state().k;
    return s->run->diverged() ? CSGD_ERR_DIVERGED : CSGD_OK;
  });
}

csgd_status csgd_session_state_get(const csgd_session* s, csgd_session_state* out) {
  if (!s || !out) return bad_arg("null argument");
  return guard([&] {
    const auto& run = *s->run;
    csgd_session_state st{};
    st.k = run.state().k;
    st.gamma = run.gamma_last();
    st.phase_index = run.controller().phase_index;
    st.n_restarts = run.controller().restart_log.size();
    st.diverged = run.diverged() ? 1 : 0;
    if (run.diverged()) {
      st.statistic = st.err = st.err_avg = st.dist = std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto r = run.snapshot();
      st.statistic = r.statistic;
      st.err = r.err;
      st.err_avg = r.err_avg;
      st.dist = r.dist;
      st.gamma = r.gamma;
    }
    *out = st;
    return CSGD_OK;
  });
}

csgd_status csgd_session_theta(const csgd_session* s, int which, double* buf, size_t len,
                               size_t* d_out) {
  if (!s || (len > 0 && !buf)) return bad_arg("null argument");
  if (which != 1 && which != 2) return bad_arg("which must be 1 or 2");
  return guard([&] {
    const csgd::Vec& v = which == 1 ? s->run->state().theta1 : s->run->state().theta2;
    if (which == 2 && v.size() == 0) {
      g_last_error = "this controller runs no auxiliary iterate";
      return CSGD_ERR_INVALID_ARGUMENT;
    }
    const size_t n = std::min(len, v.size());
    for (size_t i = 0; i < n; ++i) buf[i] = v[i];
    if (d_out) *d_out = v.size();
    return CSGD_OK;
  });
}

void csgd_session_free(csgd_session* s) { delete s; }

csgd_status csgd_contraction_rate(double gamma, double mu, double L, double* out) {
  if (!out) return bad_arg("null argument");
  return guard([&] {
    *out = csgd::contraction_rate(gamma, mu, L);
    return CSGD_OK;
  });
}

csgd_status csgd_varrho(double gamma, double L, double mu, double* out) {
  if (!out) return bad_arg("null argument");
  return guard([&] {
    *out = csgd::varrho(gamma, L, mu);
    return CSGD_OK;
  });
}

csgd_status csgd_theorem1_floor(double gamma, double L, double mu, uint64_t k, double* out) {
  if (!out) return bad_arg("null argument");
  return guard([&] {
    *out = csgd::theorem1_floor(gamma, L, mu, k);
    return CSGD_OK;
  });
}

csgd_status csgd_lemma1(double L, double mu, size_t grid_size, double* gamma0, double* k0,
                        double* worst_margin, int* pass) {
  return guard([&] {
    const auto r = csgd::lemma1_check(L, mu, grid_size);
    if (gamma0) *gamma0 = r.gamma0;
    if (k0) *k0 = r.k0;
    if (worst_margin) *worst_margin = r.worst_margin;
    if (pass) *pass = r.pass ? 1 : 0;
    return CSGD_OK;
  });
}

csgd_status csgd_ar1_stationary_error(size_t d, double gamma, double h, double c, double* out) {
  if (!out) return bad_arg("null argument");
  return guard([&] {
    *out = csgd::ar1_stationary_error(d, gamma, h, c);
    return CSGD_OK;
  });
}

}  // extern "C"
