#pragma once

// Domain types of the multi-unit model and the closed-form log-densities that
// make up the MAP objective.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace muss {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class Split { train, validation, test, none };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct Observation {
  Vector x;                    // normalized explanatory variables, length D
  double y = 0.0;              // normalized target
  std::int64_t timestamp = 0;  // seconds since epoch
  Split split = Split::none;
};

struct UnitDataset {
  std::string unit_id;
  std::vector<Observation> observations;  // ascending timestamp

  std::size_t size() const { return observations.size(); }
  bool empty() const { return observations.empty(); }
};

struct MultiUnitDataset {
  std::vector<UnitDataset> units;

  std::size_t unit_count() const { return units.size(); }
  std::size_t total_observations() const;
  /// Shared input dimension, or 0 when the dataset holds no observations.
  Index input_dim() const;
  /// Throws DimensionError / std::invalid_argument when an invariant is broken
  /// (mixed D, non-finite values, unsorted timestamps, duplicate ids).
  void validate() const;
  /// Position of a unit id, or -1.
  std::ptrdiff_t find(const std::string& unit_id) const;
};

struct PriorConfig {
  double theta_sigma = 1.0;  // Σ_θ = theta_sigma² I
  double alpha = 1.0;        // Gamma concentration
  double beta = 0.001;       // Gamma rate

  void validate() const;
};

/// Parameters of the hierarchical model. Column i of `contexts` is the
/// context vector of unit i; the precision of unit i is softplus(raw_precisions[i]).
struct ModelParams {
  Vector theta;
  Matrix contexts;
  Vector raw_precisions;

  Index unit_count() const { return contexts.cols(); }
  Index context_dim() const { return contexts.rows(); }
  double precision(Index unit) const;
  Vector precisions() const;
};

double softplus(double t);
/// Inverse of softplus for tau > 0.
double softplus_inverse(double tau);
/// Derivative of softplus.
double sigmoid(double t);

double gaussian_log_density(double y, double mean, double precision);
double context_log_prior(const Eigen::Ref<const Vector>& c);
double precision_log_prior(double tau, const PriorConfig& cfg);
double theta_log_prior(const Eigen::Ref<const Vector>& theta, const PriorConfig& cfg);
double log_prior(const ModelParams& params, const PriorConfig& cfg);

}  // namespace muss
