#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csgd/controllers.hpp"
#include "csgd/engine.hpp"
#include "csgd/problems.hpp"

namespace csgd {

struct ControllerSpec {
  std::string name;
  ControllerParams params;
};

struct OutputOptions {
  std::string dir = "out";
  bool csv = true;
  bool json = true;
  bool svg = true;
  bool geometric_mean = false;  // aggregate exp(mean(log x)) instead of the mean
  bool x_log = true;
};

struct ExperimentConfig {
  ProblemOptions problem;
  std::optional<std::uint64_t> problem_seed;  // unset: the master seed
  EngineOptions engine;
  bool average = true;
  std::vector<ControllerSpec> controllers;
  std::size_t n_reps = 10;
  std::uint64_t master_seed = 42;
  unsigned threads = 0;  // 0 = hardware concurrency
  OutputOptions output;

  ProblemOptions problem_options() const;
};

// Raw configuration tree. The file dialect is YAML, so JSON input parses too.
nlohmann::json parse_config_text(std::string_view text);
nlohmann::json load_config_tree(const std::filesystem::path& path);

// Validates a tree, fills every default and returns the typed config. Errors
// are ErrorCode::Config with a field path such as "controllers[1].beta0".
ExperimentConfig config_from_json(const nlohmann::json& tree);
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully explicit form; config_from_json(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Sets a dotted key ("engine.n_iters", "controllers.0.r") from scalar text,
// which is read the way a YAML scalar would be.
void set_config_value(nlohmann::json& tree, std::string_view dotted_key,
                      std::string_view value_text);

// Master seed precedence: explicit value > CSGD_MASTER_SEED > config. Writes
// the winner into the tree and returns it.
std::uint64_t resolve_master_seed(nlohmann::json& tree, std::optional<std::uint64_t> explicit_seed);

// Full-scale run lengths: n = 1e6 for dataset kinds and n_iters = 1e6.
void apply_full_scale(nlohmann::json& tree);

}  // namespace csgd
