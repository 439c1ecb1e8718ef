#pragma once

// Run configuration: one YAML file with sections `generator`, `baselines`,
// `model`, `training` and `evaluation`, plus dotted-path overrides such as
// `training.lambda=0.5`. Unknown sections or keys are rejected.

#include <filesystem>
#include <string>
#include <vector>

#include "lse/baseline_encoders.hpp"
#include "lse/model.hpp"
#include "lse/signal_gen.hpp"
#include "lse/training.hpp"

namespace lse::config {

struct BaselineSection {
  baseline::Grid tbr = baseline::default_grid(baseline::Method::tbr);
  baseline::Grid sf = baseline::default_grid(baseline::Method::sf);
  baseline::Grid mw = baseline::default_grid(baseline::Method::mw);
  /// Parameters used by eval and sweep-snr when no grid search result is given.
  baseline::BaselineParams tbr_params = baseline::published_optimum(baseline::Method::tbr);
  baseline::BaselineParams sf_params = baseline::published_optimum(baseline::Method::sf);
  baseline::BaselineParams mw_params = baseline::published_optimum(baseline::Method::mw);
};

struct EvaluationSection {
  std::vector<double> lambdas{0.0, 0.1, 0.2, 0.5, 1.0};
  std::size_t lambda_seeds = 3;
  std::vector<double> snr_db{5.0, 10.0, 15.0, 20.0};
  std::size_t snr_windows = 10000;
  std::uint64_t snr_seed = 1;
  std::size_t batch_size = 256;
  bool per_window_json = false;
};

struct RunConfig {
  signal::GeneratorConfig generator;
  BaselineSection baselines;
  model::ModelConfig model;
  training::TrainConfig training;
  EvaluationSection evaluation;
};

/// Throws ConfigError on unknown keys, wrong types, or invalid values.
RunConfig load(const std::filesystem::path& path);
RunConfig parse(const std::string& yaml_text);

/// `section.key=value`, value parsed as YAML (so lists work: `[0, 0.5]`).
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Fully resolved YAML; parse(to_yaml(c)) reproduces c.
std::string to_yaml(const RunConfig& cfg);

/// Checks cross-field invariants. Throws ConfigError.
void validate(const RunConfig& cfg);

}  // namespace lse::config
