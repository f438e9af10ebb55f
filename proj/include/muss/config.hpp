#pragma once

// Experiment configuration files (JSON). Every section and key is optional;
// missing values keep the desk-scale defaults. Unknown keys are rejected.
//
// {
//   "network":     {"context_dim": 4, "hidden_width": 64, "hidden_depth": 3},
//   "priors":      {"theta_sigma": 1.0, "alpha": 1.0, "beta": 0.001},
//   "train":       {"learning_rate": 1e-3, "epochs": 2000, "batch_budget": 256, "seed": 0,
//                   "validation_averaging": "per_observation", "full_batch": false,
//                   "initial_precision": 0, "progress_every": 0},
//   "calibration": {"epochs": 100, "learning_rate": 1e-2, "fix_precision": true,
//                   "reinit_each_call": true, "optimizer": "adam"},
//   "generator":   {"units": 32, "points_mean": 200, "points_log_sigma": 0.5, "points_min": 30,
//                   "points_max": 3000, "seed": 0, "horizon_days": 730},
//   "split":       {"train": 0.81, "validation": 0.14, "test": 0.05, "chunk_days": 30, "seed": 0},
//   "scaling":     {"m_list": [1, 2, 4, 8, 16, 32], "repetitions": 5, "seed": 0},
//   "fewshot":     {"n_base": 24, "n_repetitions": 1, "max_repetitions": 200, "n_max": 10, "seed": 0}
// }

#include "muss/harness.hpp"

#include <string>

namespace muss {

struct SplitConfig {
  SplitFractions fractions;
  int chunk_days = 30;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  NetworkSpec network;
  PriorConfig priors;
  TrainConfig train;
  CalibrationConfig calibration;
  GeneratorConfig generator;
  SplitConfig split;
  ScalingConfig scaling;
  FewShotConfig fewshot;

  /// Width 64, depth 3, K = 4, 2000 epochs, batch 256, 32 units of ~200 points;
  /// learning rates 1e-3 (pretraining) and 1e-2 (calibration).
  static ExperimentConfig desk_scale();
  void validate() const;
};

/// Throws ConfigError on malformed JSON, wrong types, unknown keys or invalid values.
ExperimentConfig parse_experiment_config(const std::string& json_text);
/// Throws FileError when the file cannot be read.
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace muss
