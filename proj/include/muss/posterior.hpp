#pragma once

// Laplace approximation of a unit's context posterior and its information
// gain relative to the N(0, I) context prior.

#include "muss/calib.hpp"
#include "muss/synth.hpp"

#include <vector>

namespace muss {

struct LaplacePosterior {
  Vector mean;
  Matrix covariance;
  double jitter = 0.0;  // diagonal shift that was needed to factorize H
};

struct InformationGain {
  double nats = 0.0;
  double bits = 0.0;
};

/// H = -∇_c ∇_c J at `context` with θ and τ fixed: I from the prior plus
/// symmetrized central differences of the analytic likelihood gradient.
Matrix context_hessian(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                       double precision, double step = 1e-4);

/// Covariance H⁻¹. If Cholesky fails, ε I is added with ε = 1e-6, 1e-5, ..., 1e-2
/// before giving up with NumericalError.
LaplacePosterior laplace_posterior(const Matrix& hessian, const Vector& mean);

/// KL(N(μ, S) || N(0, I)) = ½ (tr S + ‖μ‖² - K - ln det S).
InformationGain kl_to_standard_normal(const LaplacePosterior& post);

struct InformationGainPoint {
  std::size_t n = 0;
  InformationGain gain;
  /// Set when the Laplace step gave up; gain is NaN then.
  bool posterior_failed = false;
};

/// For n = 0..n_max (bounded by the sequence length) calibrate on the first n
/// training points of the sequence and evaluate the information gain.
/// A Hessian that stays indefinite after jitter throws, unless
/// `record_failures` is set, in which case that point is flagged instead.
std::vector<InformationGainPoint> information_gain_curve(const FitResult& base, const UnitDataset& unit,
                                                         const std::vector<FewShotStep>& sequence, std::size_t n_max,
                                                         const CalibrationConfig& cfg, bool record_failures = false);

}  // namespace muss
