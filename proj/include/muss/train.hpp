#pragma once

// MAP estimation of (c, t, θ) by mini-batch stochastic gradient ascent.

#include "muss/core.hpp"
#include "muss/net.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace muss {

enum class ValidationAveraging { per_observation, per_unit };

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 20000;
  std::size_t batch_budget = 2048;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ValidationAveraging validation_averaging = ValidationAveraging::per_observation;
  /// Use every training observation in every step (N_i / B_i = 1).
  bool full_batch = false;
  /// Starting precision of every unit; <= 0 selects the prior mean α/β.
  double initial_precision = 0.0;
  /// Write a progress line to stderr every this many epochs (0 = silent).
  int progress_every = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double objective_estimate = 0.0;  // mean Ĵ over the epoch's iterations
  double validation_mse = 0.0;
};

/// A trained model: network layout, priors, the selected parameters and the
/// training history.
struct FitResult {
  NetworkSpec net;
  PriorConfig priors;
  ModelParams params;
  std::vector<std::string> unit_ids;
  std::vector<EpochRecord> history;
  int selected_epoch = 0;
  std::uint64_t seed = 0;
  int epochs = 0;
};

/// Per-unit lists of observation indices, drawn with replacement.
struct MiniBatch {
  std::vector<std::vector<std::size_t>> indices;
};

/// B_i = max(1, round(B N_i / N)) for units with N_i > 0, else 0.
std::vector<std::size_t> batch_allocation(const std::vector<std::size_t>& unit_sizes, std::size_t batch_budget);

MiniBatch draw_minibatch(const MultiUnitDataset& data, std::size_t batch_budget, std::mt19937_64& rng);

/// The batch holding every observation exactly once.
MiniBatch full_batch(const MultiUnitDataset& data);

struct ObjectiveTerms {
  double likelihood = 0.0;
  double context_prior = 0.0;
  double precision_prior = 0.0;
  double theta_prior = 0.0;

  double total() const { return likelihood + context_prior + precision_prior + theta_prior; }
};

struct ObjectiveGradient {
  double value = 0.0;  // Ĵ
  ObjectiveTerms terms;
  Vector d_theta;
  Matrix d_contexts;     // K × M
  Vector d_raw_precisions;
};

/// Mini-batch estimate Ĵ of J^r and its gradient: the likelihood of unit i is
/// scaled by N_i / B_i, N_i being the unit's observation count in `data`.
ObjectiveGradient stochastic_gradient(const ModelParams& params, const MultiUnitDataset& data,
                                      const MiniBatch& batch, const NetworkSpec& net, const PriorConfig& priors);

/// Exact ∇J^r over the whole dataset.
ObjectiveGradient full_gradient(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net,
                                const PriorConfig& priors);

/// Flat layout [θ, vec(contexts), t], used by the optimizer.
Vector flatten(const ModelParams& params);
Vector flatten(const ObjectiveGradient& grad);
void unflatten(const Eigen::Ref<const Vector>& flat, ModelParams& params);

/// Adam in the ascent direction (parameters move along +gradient).
class AdamOptimizer {
 public:
  AdamOptimizer(Index size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& gradient, double learning_rate);
  long long steps() const { return steps_; }

 private:
  double beta1_, beta2_, eps_;
  Vector m_, v_;
  long long steps_ = 0;
};

ModelParams initial_params(const NetworkSpec& net, Index unit_count, const PriorConfig& priors,
                           const TrainConfig& cfg);

double validation_mse(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net,
                      ValidationAveraging averaging = ValidationAveraging::per_observation);

/// Trains on `train` and selects the epoch with the lowest validation MSE
/// (earliest on ties). `train` and `validation` list the same units in the
/// same order.
FitResult fit(const MultiUnitDataset& train, const MultiUnitDataset& validation, const NetworkSpec& net,
              const PriorConfig& priors, const TrainConfig& cfg);

}  // namespace muss
