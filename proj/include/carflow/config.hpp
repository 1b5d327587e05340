#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carflow/cfm.hpp"
#include "carflow/guidance.hpp"
#include "carflow/mog.hpp"
#include "carflow/value.hpp"

namespace carflow {

struct EvalConfig {
  int n_samples = 10000;
  int sample_steps = 100;
  std::vector<std::string> targets = {"1x", "x1", "00", "11", "10"};
  std::vector<std::string> methods = {"none", "cov_g", "pcgrad", "car"};
  std::vector<std::uint64_t> seeds = {0};  // one experiment cell per (method, target, seed)
  double reward_weight = 1.0;              // classifier term weight
  bool calibrate = true;                   // sweep the guidance scale on single constraints
  std::vector<double> scale_grid = {0.5, 1.0, 2.0, 5.0, 10.0};
  int calibrate_samples = 2000;
};

struct ExperimentConfig {
  GaussianMixture gm;
  LabelTable labels;
  FlowTrainConfig flow;
  GuidanceConfig guidance;  // engine is chosen per method at run time
  GuidanceTrainConfig value;
  EvalConfig eval;
};

/// The benchmark world with stock training/eval settings.
ExperimentConfig default_experiment_config();

/// Strict parsing: unknown keys anywhere raise ConfigError; missing keys keep
/// their defaults.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace carflow
