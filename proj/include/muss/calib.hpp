#pragma once

// Few-shot calibration of a new unit's context against a frozen base model.

#include "muss/core.hpp"
#include "muss/train.hpp"

#include <vector>

namespace muss {

enum class CalibrationOptimizer { adam, gradient_ascent };

struct CalibrationConfig {
  int epochs = 100;
  double learning_rate = 1e-4;
  bool fix_precision = true;
  /// Start every call from init_new_unit(); otherwise continue from `start`.
  bool reinit_each_call = true;
  CalibrationOptimizer optimizer = CalibrationOptimizer::adam;

  void validate() const;
};

struct CalibratedUnit {
  Vector context;
  double precision = 1.0;
  std::size_t n_points = 0;
};

/// c = 0 and τ = mean of the base units' precisions.
CalibratedUnit init_new_unit(const FitResult& base);

/// The fitted state of base unit `unit`.
CalibratedUnit base_unit(const FitResult& base, Index unit);

struct UnitObjective {
  double value = 0.0;
  Vector d_context;
  double d_precision = 0.0;  // ∂/∂τ
};

/// J restricted to one unit with θ frozen at the base value:
/// ∑_j log N(y_j | f(x_j; c, θ̂), 1/τ) + log p(c) + log p(τ).
UnitObjective unit_objective(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                             double precision);

/// Context gradient of the likelihood term alone (no prior).
Vector likelihood_context_gradient(const FitResult& base, const UnitDataset& data,
                                   const Eigen::Ref<const Vector>& context, double precision);

double calibration_objective(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                             double precision);

/// Full-batch gradient ascent on the new unit's context (and precision unless
/// fixed). When `trace` is given it receives the objective before every step
/// and after the last one.
CalibratedUnit calibrate(const FitResult& base, const UnitDataset& data, const CalibrationConfig& cfg,
                         const CalibratedUnit* start = nullptr, std::vector<double>* trace = nullptr);

struct Prediction {
  double mean = 0.0;
  double std = 0.0;
};

Prediction predict(const FitResult& base, const CalibratedUnit& unit, const Eigen::Ref<const Vector>& x);

}  // namespace muss
