#include "muss/calib.hpp"

#include "muss/errors.hpp"
#include "muss/objective.hpp"

#include <cmath>
#include <string>

namespace muss {

void CalibrationConfig::validate() const {
  if (epochs < 1) throw ConfigError("calibration epochs must be at least 1");
  if (!(learning_rate > 0)) throw ConfigError("calibration learning_rate must be positive");
}

CalibratedUnit init_new_unit(const FitResult& base) {
  const Index m = base.params.unit_count();
  if (m < 1) throw std::invalid_argument("base model has no units");
  CalibratedUnit unit;
  unit.context = Vector::Zero(base.params.context_dim());
  double sum = 0.0;
  for (Index i = 0; i < m; ++i) sum += base.params.precision(i);
  unit.precision = sum / static_cast<double>(m);
  return unit;
}

CalibratedUnit base_unit(const FitResult& base, Index unit) {
  if (unit < 0 || unit >= base.params.unit_count()) throw std::out_of_range("base unit index out of range");
  return {base.params.contexts.col(unit), base.params.precision(unit), 0};
}

namespace {

struct LikelihoodTerms {
  double value = 0.0;
  double d_precision = 0.0;
  Vector d_context;
};

LikelihoodTerms unit_likelihood(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                                double tau) {
  const NetworkSpec& net = base.net;
  if (context.size() != net.context_dim) throw DimensionError("context dimension does not match the base model");
  LikelihoodTerms out;
  out.d_context = Vector::Zero(context.size());
  if (data.empty()) return out;
  if (data.observations.front().x.size() != net.input_dim)
    throw DimensionError("unit input dimension does not match the base model");
  BatchEvaluator eval(net, {base.params.theta.data(), static_cast<std::size_t>(base.params.theta.size())});
  const Eigen::RowVectorXd pred = eval.forward(unit_inputs(data, context));
  Eigen::RowVectorXd upstream(pred.size());
  for (Index j = 0; j < pred.size(); ++j) {
    const double y = data.observations[static_cast<std::size_t>(j)].y;
    const double r = y - pred(j);
    out.value += gaussian_log_density(y, pred(j), tau);
    out.d_precision += 0.5 / tau - 0.5 * r * r;
    upstream(j) = tau * r;
  }
  Vector scratch = Vector::Zero(base.params.theta.size());
  Matrix d_inputs;
  eval.backward(upstream, scratch, &d_inputs);
  out.d_context = d_inputs.bottomRows(net.context_dim).rowwise().sum();
  return out;
}

}  // namespace

UnitObjective unit_objective(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                             double precision) {
  const LikelihoodTerms lik = unit_likelihood(base, data, context, precision);
  UnitObjective out;
  out.value = lik.value + context_log_prior(context) + precision_log_prior(precision, base.priors);
  out.d_context = lik.d_context - context;
  out.d_precision = lik.d_precision + (base.priors.alpha - 1.0) / precision - base.priors.beta;
  return out;
}

Vector likelihood_context_gradient(const FitResult& base, const UnitDataset& data,
                                   const Eigen::Ref<const Vector>& context, double precision) {
  return unit_likelihood(base, data, context, precision).d_context;
}

double calibration_objective(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                             double precision) {
  return unit_objective(base, data, context, precision).value;
}

CalibratedUnit calibrate(const FitResult& base, const UnitDataset& data, const CalibrationConfig& cfg,
                         const CalibratedUnit* start, std::vector<double>* trace) {
  cfg.validate();
  CalibratedUnit unit = (cfg.reinit_each_call || start == nullptr) ? init_new_unit(base) : *start;
  const Index k = unit.context.size();
  const Index n_free = cfg.fix_precision ? k : k + 1;

  Vector state(n_free);
  state.head(k) = unit.context;
  if (!cfg.fix_precision) state(k) = softplus_inverse(unit.precision);

  AdamOptimizer adam(n_free);
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const double tau = cfg.fix_precision ? unit.precision : softplus(state(k));
    const UnitObjective obj = unit_objective(base, data, state.head(k), tau);
    if (!std::isfinite(obj.value) || !obj.d_context.allFinite() || !std::isfinite(obj.d_precision))
      throw NumericalError("non-finite calibration objective at epoch " + std::to_string(epoch));
    if (trace != nullptr) trace->push_back(obj.value);
    if (epoch == cfg.epochs) break;
    Vector grad(n_free);
    grad.head(k) = obj.d_context;
    if (!cfg.fix_precision) grad(k) = obj.d_precision * sigmoid(state(k));
    if (cfg.optimizer == CalibrationOptimizer::adam)
      adam.step(state, grad, cfg.learning_rate);
    else
      state += cfg.learning_rate * grad;
  }

  unit.context = state.head(k);
  if (!cfg.fix_precision) unit.precision = softplus(state(k));
  unit.n_points = data.size();
  return unit;
}

Prediction predict(const FitResult& base, const CalibratedUnit& unit, const Eigen::Ref<const Vector>& x) {
  if (!(unit.precision > 0)) throw std::domain_error("unit precision must be positive");
  return {forward(x, unit.context, base.params.theta, base.net), 1.0 / std::sqrt(unit.precision)};
}

}  // namespace muss
