#include "muss/objective.hpp"

#include "muss/errors.hpp"

#include <string>

namespace muss {

void check_compatible(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net) {
  if (params.theta.size() != net.parameter_count())
    throw DimensionError("theta length " + std::to_string(params.theta.size()) + " does not match network (" +
                         std::to_string(net.parameter_count()) + ")");
  if (params.context_dim() != net.context_dim)
    throw DimensionError("context dimension does not match network");
  if (params.unit_count() != static_cast<Index>(data.unit_count()) ||
      params.raw_precisions.size() != params.unit_count())
    throw DimensionError("parameter unit count does not match dataset");
  const Index d = data.input_dim();
  if (d != 0 && d != net.input_dim)
    throw DimensionError("dataset input dimension " + std::to_string(d) + " does not match network (" +
                         std::to_string(net.input_dim) + ")");
}

Matrix unit_inputs(const UnitDataset& unit, const Eigen::Ref<const Vector>& c) {
  const Index n = static_cast<Index>(unit.size());
  if (n == 0) return Matrix(c.size(), 0);
  const Index d = unit.observations.front().x.size();
  Matrix in(d + c.size(), n);
  for (Index j = 0; j < n; ++j) {
    in.col(j).head(d) = unit.observations[static_cast<std::size_t>(j)].x;
    in.col(j).tail(c.size()) = c;
  }
  return in;
}

Vector unit_predictions(const UnitDataset& unit, const Eigen::Ref<const Vector>& c, const Vector& theta,
                        const NetworkSpec& net) {
  if (unit.empty()) return Vector(0);
  BatchEvaluator eval(net, {theta.data(), static_cast<std::size_t>(theta.size())});
  return eval.forward(unit_inputs(unit, c)).transpose();
}

double log_likelihood(const Matrix& contexts, const Vector& precisions, const Vector& theta,
                      const MultiUnitDataset& data, const NetworkSpec& net) {
  if (contexts.cols() != static_cast<Index>(data.unit_count()) || precisions.size() != contexts.cols())
    throw DimensionError("log_likelihood: parameter unit count does not match dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.unit_count(); ++i) {
    const auto& unit = data.units[i];
    if (unit.empty()) continue;
    const Vector pred = unit_predictions(unit, contexts.col(static_cast<Index>(i)), theta, net);
    const double tau = precisions[static_cast<Index>(i)];
    for (std::size_t j = 0; j < unit.size(); ++j)
      total += gaussian_log_density(unit.observations[j].y, pred[static_cast<Index>(j)], tau);
  }
  return total;
}

double log_likelihood(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net) {
  check_compatible(params, data, net);
  return log_likelihood(params.contexts, params.precisions(), params.theta, data, net);
}

double objective(const Matrix& contexts, const Vector& precisions, const Vector& theta,
                 const MultiUnitDataset& data, const NetworkSpec& net, const PriorConfig& priors) {
  double prior = 0.0;
  for (Index i = 0; i < contexts.cols(); ++i)
    prior += context_log_prior(contexts.col(i)) + precision_log_prior(precisions[i], priors);
  prior += theta_log_prior(theta, priors);
  return log_likelihood(contexts, precisions, theta, data, net) + prior;
}

double objective_reparameterized(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net,
                                 const PriorConfig& priors) {
  check_compatible(params, data, net);
  return objective(params.contexts, params.precisions(), params.theta, data, net, priors);
}

}  // namespace muss
