#pragma once

// Log-likelihood and MAP objectives over a multi-unit dataset.

#include "muss/core.hpp"
#include "muss/net.hpp"

namespace muss {

/// Throws DimensionError unless data, parameters and network agree.
void check_compatible(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net);

/// ∑_i ∑_j log N(y_ij | f(x_ij; c_i, θ), 1/τ_i) with explicit precisions τ.
double log_likelihood(const Matrix& contexts, const Vector& precisions, const Vector& theta,
                      const MultiUnitDataset& data, const NetworkSpec& net);

/// Log-likelihood with τ_i = softplus(t_i).
double log_likelihood(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net);

/// J(c, τ, θ | D): log-likelihood plus log-prior, with τ given directly.
double objective(const Matrix& contexts, const Vector& precisions, const Vector& theta,
                 const MultiUnitDataset& data, const NetworkSpec& net, const PriorConfig& priors);

/// J^r(c, t, θ | D) = J(c, softplus(t), θ | D).
double objective_reparameterized(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net,
                                 const PriorConfig& priors);

/// Network outputs for every observation of one unit under context c.
Vector unit_predictions(const UnitDataset& unit, const Eigen::Ref<const Vector>& c, const Vector& theta,
                        const NetworkSpec& net);

/// Stacks [x; c] column-wise for the given observations of a unit.
Matrix unit_inputs(const UnitDataset& unit, const Eigen::Ref<const Vector>& c);

}  // namespace muss
