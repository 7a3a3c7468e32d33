#include "csgd/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace csgd {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
  fail(ErrorCode::Config, (path.empty() ? std::string() : path + ": ") + msg);
}

bool ieq(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

json scalar_from_text(const std::string& s) {
  if (s == "~" || ieq(s, "null") || s.empty()) return nullptr;
  if (ieq(s, "true")) return true;
  if (ieq(s, "false")) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const char* digits = (*b == '+' || *b == '-') ? b + 1 : b;
  if (digits != e && std::all_of(digits, e, [](char c) { return c >= '0' && c <= '9'; })) {
    if (*b == '-') {
      std::int64_t v = 0;
      if (std::from_chars(b, e, v).ec == std::errc()) return v;
    } else {
      std::uint64_t v = 0;
      if (std::from_chars(digits, e, v).ec == std::errc()) return v;
    }
  }
  if (ieq(s, ".inf") || ieq(s, "+.inf")) return std::numeric_limits<double>::infinity();
  if (ieq(s, "-.inf")) return -std::numeric_limits<double>::infinity();
  double d = 0.0;
  const char* start = *b == '+' ? b + 1 : b;
  auto [ptr, ec] = std::from_chars(start, e, d);
  if (ec == std::errc() && ptr == e) return d;
  return s;
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      if (node.Tag() == "!") return node.Scalar();  // quoted
      return scalar_from_text(node.Scalar());
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (obj.contains(key)) config_error(key, "duplicate key");
        obj[key] = yaml_to_json(kv.second);
      }
      return obj;
    }
  }
  return nullptr;
}

// ---- typed readers ---------------------------------------------------------

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) config_error(path, "expected a mapping");
  return j;
}

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed,
                    const std::string& context) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      config_error(join(path, key), "unknown field" + (context.empty() ? "" : " for " + context));
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) config_error(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) config_error(path, "must be finite");
  return d;
}

std::uint64_t as_uint(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) config_error(path, "must be non-negative");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d <= 9007199254740992.0 && std::floor(d) == d)
      return static_cast<std::uint64_t>(d);
  }
  config_error(path, "expected a non-negative integer");
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) config_error(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) config_error(path, "expected a string");
  return v.get<std::string>();
}

bool is_auto(const json& v) { return v.is_null() || (v.is_string() && v.get<std::string>() == "auto"); }

template <class F>
void read_opt(const json& obj, const char* key, const std::string& path, F&& f) {
  auto it = obj.find(key);
  if (it != obj.end()) f(*it, join(path, key));
}

bool dataset_kind(ProblemKind k) {
  return k == ProblemKind::LeastSquares || k == ProblemKind::Logistic || k == ProblemKind::Svm ||
         k == ProblemKind::Lasso;
}

std::size_t default_d(ProblemKind k) {
  switch (k) {
    case ProblemKind::Svm: return 20;
    case ProblemKind::Lasso: return 100;
    case ProblemKind::UniformlyConvex: return 200;
    default: return 5;
  }
}

std::set<std::string> problem_params_for(ProblemKind k) {
  switch (k) {
    case ProblemKind::LeastSquares: return {"h_diag", "sigma_noise"};
    case ProblemKind::Logistic: return {"h_diag"};
    case ProblemKind::Svm: return {"lambda", "sigma_input"};
    case ProblemKind::Lasso: return {"lambda", "sparsity", "sigma_noise", "h_diag"};
    case ProblemKind::UniformlyConvex: return {"p_exp", "noise_scale", "start_radius"};
    case ProblemKind::Quadratic:
      return {"h_min", "h_max", "isotropic_h", "zero_linear", "noise_scale"};
    case ProblemKind::Lsa: return {"n_states", "m_min", "m_max", "perturbation"};
  }
  return {};
}

std::set<std::string> controller_fields_for(ControllerKind k) {
  std::set<std::string> f{"name", "kind", "gamma0"};
  switch (k) {
    case ControllerKind::CouplingAdaptive: f.insert("eta"); [[fallthrough]];
    case ControllerKind::CouplingStatic:
      f.insert({"r", "b", "beta0", "global_d0", "burn_in", "check_every", "patience"});
      break;
    case ControllerKind::DistanceBased:
      f.insert({"r", "q", "slope_threshold", "mu", "burn_in", "check_every", "patience",
                "track_distance"});
      break;
    case ControllerKind::Pflug:
      f.insert({"r", "mu", "burn_in", "check_every", "patience", "track_distance"});
      break;
    case ControllerKind::FixedSchedule:
      f.insert({"schedule", "C", "mu", "tau", "gamma_max", "track_distance"});
      break;
  }
  return f;
}

void validate_name(const std::string& name, const std::string& path) {
  if (name.empty()) config_error(path, "controller name must not be empty");
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      config_error(path, "controller names may use only letters, digits, '_' and '-'");
}

// Brings shorthand forms into the canonical nested layout.
void normalize(json& tree) {
  if (tree.is_null()) tree = json::object();
  if (!tree.is_object()) config_error("", "configuration must be a mapping");
  if (tree.contains("problem") && tree["problem"].is_string()) {
    json p = json::object();
    p["kind"] = tree["problem"];
    tree["problem"] = p;
  }
  for (const char* key : {"d", "n", "seed"}) {
    if (!tree.contains(key)) continue;
    if (!tree.contains("problem") || !tree["problem"].is_object())
      config_error(key, "top-level shorthand needs a problem kind");
    if (tree["problem"].contains(key)) config_error(key, "given both at top level and in problem");
    tree["problem"][key] = tree[key];
    tree.erase(key);
  }
}

ControllerParams read_controller(const json& c, const std::string& path, std::string& name) {
  require_object(c, path);
  if (!c.contains("kind")) config_error(join(path, "kind"), "missing controller kind");
  const std::string kind_name = as_string(c["kind"], join(path, "kind"));
  const auto kind = parse_controller_kind(kind_name);
  if (!kind)
    config_error(join(path, "kind"), "unknown controller kind '" + kind_name +
                                         "' (coupling_static, coupling_adaptive, distance, "
                                         "pflug, fixed)");
  reject_unknown(c, path, controller_fields_for(*kind), kind_name + " controllers");
  ControllerParams p;
  p.kind = *kind;
  name = c.contains("name") ? as_string(c["name"], join(path, "name")) : kind_name;
  validate_name(name, join(path, "name"));
  read_opt(c, "gamma0", path, [&](const json& v, const std::string& at) {
    p.gamma0 = is_auto(v) ? 0.0 : as_double(v, at);
    if (!is_auto(v) && !(p.gamma0 > 0.0)) config_error(at, "must be positive or auto");
  });
  read_opt(c, "r", path, [&](const json& v, const std::string& at) { p.r = as_double(v, at); });
  read_opt(c, "b", path, [&](const json& v, const std::string& at) { p.b = as_uint(v, at); });
  read_opt(c, "beta0", path,
           [&](const json& v, const std::string& at) { p.beta0 = as_double(v, at); });
  read_opt(c, "eta", path, [&](const json& v, const std::string& at) { p.eta = as_double(v, at); });
  read_opt(c, "check_every", path,
           [&](const json& v, const std::string& at) { p.check_every = as_uint(v, at); });
  read_opt(c, "burn_in", path, [&](const json& v, const std::string& at) {
    if (!is_auto(v)) p.burn_in = as_uint(v, at);
  });
  read_opt(c, "patience", path, [&](const json& v, const std::string& at) {
    const auto n = as_uint(v, at);
    if (n == 0 || n > 1000000) config_error(at, "must lie in [1, 1e6]");
    p.patience = static_cast<std::uint32_t>(n);
  });
  read_opt(c, "global_d0", path,
           [&](const json& v, const std::string& at) { p.global_d0 = as_bool(v, at); });
  read_opt(c, "q", path, [&](const json& v, const std::string& at) { p.q = as_double(v, at); });
  read_opt(c, "slope_threshold", path,
           [&](const json& v, const std::string& at) { p.slope_threshold = as_double(v, at); });
  read_opt(c, "schedule", path, [&](const json& v, const std::string& at) {
    const std::string s = as_string(v, at);
    const auto k = parse_schedule_kind(s);
    if (!k)
      config_error(at, "unknown schedule '" + s + "' (constant, inv_sqrt, inv_mu_k, uniform_opt)");
    p.schedule = *k;
  });
  read_opt(c, "C", path, [&](const json& v, const std::string& at) { p.C = as_double(v, at); });
  read_opt(c, "mu", path, [&](const json& v, const std::string& at) {
    if (!is_auto(v)) p.mu = as_double(v, at);
  });
  read_opt(c, "tau", path, [&](const json& v, const std::string& at) {
    if (!is_auto(v)) p.tau = as_double(v, at);
  });
  read_opt(c, "gamma_max", path, [&](const json& v, const std::string& at) {
    if (!v.is_null()) p.gamma_max = as_double(v, at);
  });
  read_opt(c, "track_distance", path,
           [&](const json& v, const std::string& at) { p.track_distance = as_bool(v, at); });
  try {
    validate(p);
  } catch (const Error& e) {
    // validate() reports "field: reason"; splice the field into the path.
    const std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon == std::string::npos) config_error(path, msg);
    config_error(path + "." + msg.substr(0, colon), msg.substr(colon + 2));
  }
  return p;
}

json controller_to_json(const ControllerSpec& spec) {
  const ControllerParams& p = spec.params;
  const auto fields = controller_fields_for(p.kind);
  json c = json::object();
  auto put = [&](const char* key, json value) {
    if (fields.count(key)) c[key] = std::move(value);
  };
  put("name", spec.name);
  put("kind", std::string(to_string(p.kind)));
  put("gamma0", p.gamma0 > 0.0 ? json(p.gamma0) : json("auto"));
  put("r", p.r);
  put("b", p.b);
  put("beta0", p.beta0);
  put("eta", p.eta);
  put("check_every", p.check_every);
  put("burn_in", p.burn_in ? json(*p.burn_in) : json("auto"));
  put("patience", p.patience);
  put("global_d0", p.global_d0);
  put("q", p.q);
  put("slope_threshold", p.slope_threshold);
  put("schedule", std::string(to_string(p.schedule)));
  put("C", p.C);
  put("mu", p.mu ? json(*p.mu) : json("auto"));
  put("tau", p.tau ? json(*p.tau) : json("auto"));
  put("gamma_max", p.gamma_max ? json(*p.gamma_max) : json(nullptr));
  put("track_distance", p.track_distance);
  return c;
}

}  // namespace

ProblemOptions ExperimentConfig::problem_options() const {
  ProblemOptions o = problem;
  o.seed = problem_seed.value_or(master_seed);
  return o;
}

json parse_config_text(std::string_view text) {
  YAML::Node node;
  try {
    node = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::Config, std::string("cannot parse configuration: ") + e.what());
  }
  json tree = yaml_to_json(node);
  normalize(tree);
  return tree;
}

json load_config_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Config, "cannot open configuration file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig config_from_json(const json& input) {
  json tree = input;
  normalize(tree);
  reject_unknown(tree, "", {"problem", "engine", "controllers", "replication", "output"}, "");
  ExperimentConfig cfg;

  // problem
  if (!tree.contains("problem")) config_error("problem", "missing problem block");
  const json& pb = require_object(tree["problem"], "problem");
  if (!pb.contains("kind")) config_error("problem.kind", "missing problem kind");
  const std::string kind_name = as_string(pb["kind"], "problem.kind");
  const auto kind = parse_problem_kind(kind_name);
  if (!kind)
    config_error("problem.kind", "unknown problem kind '" + kind_name +
                                     "' (logistic, least_squares, svm, lasso, "
                                     "uniformly_convex, quadratic, lsa)");
  reject_unknown(pb, "problem", {"kind", "d", "n", "seed", "params"}, "");
  ProblemOptions& po = cfg.problem;
  po.kind = *kind;
  po.d = default_d(*kind);
  po.n = dataset_kind(*kind) ? 100000 : 0;
  read_opt(pb, "d", "problem", [&](const json& v, const std::string& at) {
    po.d = as_uint(v, at);
    if (po.d == 0 || po.d > 100000) config_error(at, "must lie in [1, 1e5]");
  });
  read_opt(pb, "n", "problem", [&](const json& v, const std::string& at) {
    po.n = as_uint(v, at);
    if (po.n > 100000000) config_error(at, "must not exceed 1e8");
  });
  if (dataset_kind(*kind) && (*kind == ProblemKind::Svm || *kind == ProblemKind::Lasso) &&
      po.n == 0)
    config_error("problem.n", kind_name + " needs a finite dataset (n > 0)");
  if (!dataset_kind(*kind) && po.n != 0)
    config_error("problem.n", kind_name + " is a streaming problem; n must be 0");
  read_opt(pb, "seed", "problem", [&](const json& v, const std::string& at) {
    if (!is_auto(v)) cfg.problem_seed = as_uint(v, at);
  });
  if (pb.contains("params")) {
    const json& pp = require_object(pb["params"], "problem.params");
    reject_unknown(pp, "problem.params", problem_params_for(*kind), kind_name + " problems");
    const std::string at = "problem.params";
    read_opt(pp, "h_diag", at, [&](const json& v, const std::string& p) {
      if (v.is_string() && v.get<std::string>() == "harmonic") return;
      if (!v.is_array()) config_error(p, "expected a list of positive numbers or 'harmonic'");
      Vec h(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) h[i] = as_double(v[i], p + "[" + std::to_string(i) + "]");
      po.h_diag = std::move(h);
    });
    auto num = [&](const char* key, std::optional<double>& dst) {
      read_opt(pp, key, at, [&](const json& v, const std::string& p) { dst = as_double(v, p); });
    };
    num("sigma_noise", po.sigma_noise);
    num("lambda", po.lambda);
    num("sigma_input", po.sigma_input);
    num("p_exp", po.p_exp);
    num("noise_scale", po.noise_scale);
    num("start_radius", po.start_radius);
    num("h_min", po.h_min);
    num("h_max", po.h_max);
    num("isotropic_h", po.isotropic_h);
    num("m_min", po.m_min);
    num("m_max", po.m_max);
    num("perturbation", po.perturbation);
    read_opt(pp, "sparsity", at,
             [&](const json& v, const std::string& p) { po.sparsity = as_uint(v, p); });
    read_opt(pp, "n_states", at,
             [&](const json& v, const std::string& p) { po.n_states = as_uint(v, p); });
    read_opt(pp, "zero_linear", at,
             [&](const json& v, const std::string& p) { po.zero_linear = as_bool(v, p); });
    if (po.h_diag && po.h_diag->size() != po.d)
      config_error("problem.params.h_diag", "length " + std::to_string(po.h_diag->size()) +
                                                " does not match d = " + std::to_string(po.d));
    if (po.sparsity && *po.sparsity > po.d)
      config_error("problem.params.sparsity", "s = " + std::to_string(*po.sparsity) +
                                                  " exceeds d = " + std::to_string(po.d));
  }

  // engine
  if (tree.contains("engine")) {
    const json& eb = require_object(tree["engine"], "engine");
    reject_unknown(eb, "engine",
                   {"n_iters", "batch_size", "average", "trace_stride", "init_scale",
                    "divergence_threshold"},
                   "");
    read_opt(eb, "n_iters", "engine",
             [&](const json& v, const std::string& at) { cfg.engine.n_iters = as_uint(v, at); });
    read_opt(eb, "batch_size", "engine", [&](const json& v, const std::string& at) {
      po.batch_size = as_uint(v, at);
      if (po.batch_size == 0) config_error(at, "must be at least 1");
    });
    read_opt(eb, "average", "engine",
             [&](const json& v, const std::string& at) { cfg.average = as_bool(v, at); });
    read_opt(eb, "trace_stride", "engine", [&](const json& v, const std::string& at) {
      cfg.engine.trace_stride = as_uint(v, at);
    });
    read_opt(eb, "init_scale", "engine", [&](const json& v, const std::string& at) {
      cfg.engine.init_scale = as_double(v, at);
      if (cfg.engine.init_scale < 0.0) config_error(at, "must be non-negative");
    });
    read_opt(eb, "divergence_threshold", "engine", [&](const json& v, const std::string& at) {
      cfg.engine.divergence_threshold = as_double(v, at);
      if (!(cfg.engine.divergence_threshold > 0.0)) config_error(at, "must be positive");
    });
  }
  if (po.kind == ProblemKind::Lsa && po.batch_size != 1)
    config_error("engine.batch_size", "lsa runs with batch_size 1");

  // controllers
  if (tree.contains("controllers")) {
    const json& cl = tree["controllers"];
    if (!cl.is_array()) config_error("controllers", "expected a list");
    if (cl.empty()) config_error("controllers", "need at least one controller");
    std::set<std::string> names;
    for (std::size_t i = 0; i < cl.size(); ++i) {
      const std::string path = "controllers[" + std::to_string(i) + "]";
      ControllerSpec spec;
      spec.params = read_controller(cl[i], path, spec.name);
      if (!names.insert(spec.name).second)
        config_error(path + ".name", "duplicate controller name '" + spec.name + "'");
      cfg.controllers.push_back(std::move(spec));
    }
  } else {
    ControllerSpec s1{"coupling_static", {}};
    s1.params.kind = ControllerKind::CouplingStatic;
    ControllerSpec s2{"coupling_adaptive", {}};
    s2.params.kind = ControllerKind::CouplingAdaptive;
    cfg.controllers = {s1, s2};
  }
  for (auto& c : cfg.controllers) c.params.average = cfg.average;

  // replication
  if (tree.contains("replication")) {
    const json& rb = require_object(tree["replication"], "replication");
    reject_unknown(rb, "replication", {"n_reps", "master_seed", "threads"}, "");
    read_opt(rb, "n_reps", "replication", [&](const json& v, const std::string& at) {
      cfg.n_reps = as_uint(v, at);
      if (cfg.n_reps == 0 || cfg.n_reps > 100000) config_error(at, "must lie in [1, 1e5]");
    });
    read_opt(rb, "master_seed", "replication",
             [&](const json& v, const std::string& at) { cfg.master_seed = as_uint(v, at); });
    read_opt(rb, "threads", "replication", [&](const json& v, const std::string& at) {
      const auto t = as_uint(v, at);
      if (t > 1024) config_error(at, "must not exceed 1024");
      cfg.threads = static_cast<unsigned>(t);
    });
  }

  // output
  if (tree.contains("output")) {
    const json& ob = require_object(tree["output"], "output");
    reject_unknown(ob, "output", {"dir", "formats", "geometric_mean", "x_scale"}, "");
    read_opt(ob, "dir", "output", [&](const json& v, const std::string& at) {
      cfg.output.dir = as_string(v, at);
      if (cfg.output.dir.empty()) config_error(at, "must not be empty");
    });
    read_opt(ob, "formats", "output", [&](const json& v, const std::string& at) {
      if (!v.is_array()) config_error(at, "expected a list drawn from csv, json, svg");
      cfg.output.csv = cfg.output.json = cfg.output.svg = false;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string f = as_string(v[i], at + "[" + std::to_string(i) + "]");
        if (f == "csv") cfg.output.csv = true;
        else if (f == "json") cfg.output.json = true;
        else if (f == "svg") cfg.output.svg = true;
        else config_error(at + "[" + std::to_string(i) + "]", "unknown format '" + f + "'");
      }
    });
    read_opt(ob, "geometric_mean", "output", [&](const json& v, const std::string& at) {
      cfg.output.geometric_mean = as_bool(v, at);
    });
    read_opt(ob, "x_scale", "output", [&](const json& v, const std::string& at) {
      const std::string s = as_string(v, at);
      if (s != "log" && s != "linear") config_error(at, "expected log or linear");
      cfg.output.x_log = s == "log";
    });
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(load_config_tree(path));
}

json config_to_json(const ExperimentConfig& cfg) {
  const ProblemOptions& po = cfg.problem;
  json params = json::object();
  const auto allowed = problem_params_for(po.kind);
  auto put = [&](const char* key, json value) {
    if (allowed.count(key)) params[key] = std::move(value);
  };
  if (po.h_diag) {
    put("h_diag", json(po.h_diag->values()));
  } else {
    put("h_diag", "harmonic");
  }
  const double d = static_cast<double>(po.d);
  switch (po.kind) {
    case ProblemKind::LeastSquares: put("sigma_noise", po.sigma_noise.value_or(1.0)); break;
    case ProblemKind::Logistic: break;
    case ProblemKind::Svm:
      put("lambda", po.lambda.value_or(0.1));
      put("sigma_input", po.sigma_input.value_or(1.0));
      break;
    case ProblemKind::Lasso:
      put("lambda", po.lambda.value_or(1e-4));
      put("sparsity", po.sparsity.value_or(std::min<std::size_t>(60, po.d)));
      put("sigma_noise", po.sigma_noise.value_or(1.0));
      break;
    case ProblemKind::UniformlyConvex:
      put("p_exp", po.p_exp.value_or(2.5));
      put("noise_scale", po.noise_scale.value_or(1.0));
      put("start_radius", po.start_radius.value_or(std::sqrt(d)));
      break;
    case ProblemKind::Quadratic:
      if (po.isotropic_h) {
        put("isotropic_h", *po.isotropic_h);
      } else {
        put("h_min", po.h_min.value_or(0.1));
        put("h_max", po.h_max.value_or(1.0));
      }
      put("zero_linear", po.zero_linear.value_or(false));
      put("noise_scale", po.noise_scale.value_or(1.0));
      break;
    case ProblemKind::Lsa:
      put("n_states", po.n_states.value_or(8));
      put("m_min", po.m_min.value_or(0.5));
      put("m_max", po.m_max.value_or(2.0));
      put("perturbation", po.perturbation.value_or(0.5));
      break;
  }
  json out = json::object();
  out["problem"] = {{"kind", std::string(to_string(po.kind))},
                    {"d", po.d},
                    {"n", po.n},
                    {"seed", cfg.problem_seed ? json(*cfg.problem_seed) : json("auto")},
                    {"params", params}};
  out["engine"] = {{"n_iters", cfg.engine.n_iters},
                   {"batch_size", po.batch_size},
                   {"average", cfg.average},
                   {"trace_stride", cfg.engine.trace_stride},
                   {"init_scale", cfg.engine.init_scale},
                   {"divergence_threshold", cfg.engine.divergence_threshold}};
  json cl = json::array();
  for (const auto& c : cfg.controllers) cl.push_back(controller_to_json(c));
  out["controllers"] = cl;
  out["replication"] = {
      {"n_reps", cfg.n_reps}, {"master_seed", cfg.master_seed}, {"threads", cfg.threads}};
  json formats = json::array();
  if (cfg.output.csv) formats.push_back("csv");
  if (cfg.output.json) formats.push_back("json");
  if (cfg.output.svg) formats.push_back("svg");
  out["output"] = {{"dir", cfg.output.dir},
                   {"formats", formats},
                   {"geometric_mean", cfg.output.geometric_mean},
                   {"x_scale", cfg.output.x_log ? "log" : "linear"}};
  return out;
}

void set_config_value(json& tree, std::string_view dotted_key, std::string_view value_text) {
  normalize(tree);
  std::vector<std::string> parts;
  std::string cur;
  for (char c : dotted_key) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts)
    if (p.empty()) config_error(std::string(dotted_key), "malformed key");

  json value;
  try {
    value = yaml_to_json(YAML::Load(std::string(value_text)));
  } catch (const YAML::Exception& e) {
    config_error(std::string(dotted_key), std::string("cannot parse value: ") + e.what());
  }
  // Indexing into the implicit default list needs the list spelled out.
  if (parts.size() > 1 && parts[0] == "controllers" && !tree.contains("controllers"))
    tree["controllers"] = json::array({{{"kind", "coupling_static"}}, {{"kind", "coupling_adaptive"}}});
  json* node = &tree;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string& p = parts[i];
    if (node->is_array()) {
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), idx);
      if (ec != std::errc() || ptr != p.data() + p.size() || idx >= node->size())
        config_error(std::string(dotted_key), "no list element '" + p + "'");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) config_error(std::string(dotted_key), "'" + p + "' is not a block");
      node = &(*node)[p];
    }
  }
  if (node->is_null()) *node = json::object();
  if (!node->is_object()) config_error(std::string(dotted_key), "parent is not a block");
  (*node)[parts.back()] = value;
}

std::uint64_t resolve_master_seed(json& tree, std::optional<std::uint64_t> explicit_seed) {
  normalize(tree);
  std::optional<std::uint64_t> seed = explicit_seed;
  if (!seed) {
    if (const char* env = std::getenv("CSGD_MASTER_SEED"); env && *env) {
      std::uint64_t v = 0;
      const std::string_view s(env);
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        fail(ErrorCode::Config, "CSGD_MASTER_SEED is not a non-negative integer");
      seed = v;
    }
  }
  if (seed) {
    if (!tree.contains("replication") || !tree["replication"].is_object())
      tree["replication"] = json::object();
    tree["replication"]["master_seed"] = *seed;
    return *seed;
  }
  if (tree.contains("replication") && tree["replication"].is_object() &&
      tree["replication"].contains("master_seed"))
    return as_uint(tree["replication"]["master_seed"], "replication.master_seed");
  return 42;
}

void apply_full_scale(json& tree) {
  normalize(tree);
  if (tree.contains("problem") && tree["problem"].is_object() &&
      tree["problem"].contains("kind") && tree["problem"]["kind"].is_string()) {
    const auto kind = parse_problem_kind(tree["problem"]["kind"].get<std::string>());
    if (kind && dataset_kind(*kind)) tree["problem"]["n"] = 1000000;
  }
  if (!tree.contains("engine") || !tree["engine"].is_object()) tree["engine"] = json::object();
  tree["engine"]["n_iters"] = 1000000;
}

}  // namespace csgd
