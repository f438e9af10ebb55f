#include "muss/train.hpp"

#include "muss/errors.hpp"
#include "muss/objective.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

namespace muss {

namespace {

std::vector<std::size_t> unit_sizes(const MultiUnitDataset& data) {
  std::vector<std::size_t> sizes;
  sizes.reserve(data.unit_count());
  for (const auto& u : data.units) sizes.push_back(u.size());
  return sizes;
}

std::string describe_terms(const ObjectiveTerms& t) {
  if (!std::isfinite(t.likelihood)) return "likelihood";
  if (!std::isfinite(t.context_prior)) return "context prior";
  if (!std::isfinite(t.precision_prior)) return "precision prior";
  if (!std::isfinite(t.theta_prior)) return "theta prior";
  return "gradient";
}
}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_budget < 1) throw ConfigError("batch_budget must be at least 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) || !(adam_eps > 0))
    throw ConfigError("Adam hyper-parameters out of range");
}

std::vector<std::size_t> batch_allocation(const std::vector<std::size_t>& unit_sizes, std::size_t batch_budget) {
  std::size_t total = 0;
  for (auto n : unit_sizes) total += n;
  std::vector<std::size_t> alloc(unit_sizes.size(), 0);
  if (total == 0) return alloc;
  for (std::size_t i = 0; i < unit_sizes.size(); ++i) {
    if (unit_sizes[i] == 0) continue;
    const double share = static_cast<double>(batch_budget) * static_cast<double>(unit_sizes[i]) /
                         static_cast<double>(total);
    alloc[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(share)));
  }
  return alloc;
}

MiniBatch draw_minibatch(const MultiUnitDataset& data, std::size_t batch_budget, std::mt19937_64& rng) {
  if (batch_budget < data.unit_count())
    throw std::invalid_argument("batch budget " + std::to_string(batch_budget) + " is smaller than the unit count " +
                                std::to_string(data.unit_count()));
  const auto sizes = unit_sizes(data);
  const auto alloc = batch_allocation(sizes, batch_budget);
  MiniBatch batch;
  batch.indices.resize(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (alloc[i] == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, sizes[i] - 1);
    auto& idx = batch.indices[i];
    idx.reserve(alloc[i]);
    for (std::size_t k = 0; k < alloc[i]; ++k) idx.push_back(pick(rng));
  }
  return batch;
}

MiniBatch full_batch(const MultiUnitDataset& data) {
  MiniBatch batch;
  batch.indices.resize(data.unit_count());
  for (std::size_t i = 0; i < data.unit_count(); ++i) {
    auto& idx = batch.indices[i];
    idx.resize(data.units[i].size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
  }
  return batch;
}

ObjectiveGradient stochastic_gradient(const ModelParams& params, const MultiUnitDataset& data,
                                      const MiniBatch& batch, const NetworkSpec& net, const PriorConfig& priors) {
  check_compatible(params, data, net);
  if (batch.indices.size() != data.unit_count()) throw DimensionError("mini-batch unit count does not match dataset");

  const Index m = params.unit_count();
  const Index k = params.context_dim();
  const Index d = net.input_dim;

  Index n = 0;
  for (const auto& idx : batch.indices) n += static_cast<Index>(idx.size());

  // Per-thread buffers: the training loop calls this thousands of times with
  // batches of the same shape, and fresh allocations dominate otherwise.
  thread_local Matrix inputs;
  thread_local Eigen::RowVectorXd targets, upstream;
  thread_local Matrix d_inputs;
  thread_local std::optional<BatchEvaluator> cached;
  inputs.resize(d + k, n);
  targets.resize(n);
  upstream.resize(n);
  {
    Index col = 0;
    for (Index i = 0; i < m; ++i) {
      const auto& unit = data.units[static_cast<std::size_t>(i)];
      for (std::size_t j : batch.indices[static_cast<std::size_t>(i)]) {
        const auto& obs = unit.observations.at(j);
        inputs.col(col).head(d) = obs.x;
        inputs.col(col).tail(k) = params.contexts.col(i);
        targets(col) = obs.y;
        ++col;
      }
    }
  }

  ObjectiveGradient out;
  out.d_theta = Vector::Zero(params.theta.size());
  out.d_contexts = Matrix::Zero(k, m);
  out.d_raw_precisions = Vector::Zero(m);

  const std::span<const double> theta_view{params.theta.data(), static_cast<std::size_t>(params.theta.size())};
  if (cached && cached->spec() == net)
    cached->rebind(theta_view);
  else
    cached.emplace(net, theta_view);
  BatchEvaluator& eval = *cached;
  if (n > 0) {
    const Eigen::RowVectorXd& pred = eval.forward(inputs);
    Index col = 0;
    for (Index i = 0; i < m; ++i) {
      const auto& idx = batch.indices[static_cast<std::size_t>(i)];
      if (idx.empty()) continue;
      const double tau = params.precision(i);
      const double scale = static_cast<double>(data.units[static_cast<std::size_t>(i)].size()) /
                           static_cast<double>(idx.size());
      double ll = 0.0, d_tau = 0.0;
      for (std::size_t s = 0; s < idx.size(); ++s, ++col) {
        const double r = targets(col) - pred(col);
        ll += gaussian_log_density(targets(col), pred(col), tau);
        d_tau += 0.5 / tau - 0.5 * r * r;
        upstream(col) = scale * tau * r;
      }
      out.terms.likelihood += scale * ll;
      out.d_raw_precisions[i] += scale * d_tau;
    }
    eval.backward(upstream, out.d_theta, &d_inputs);
  }

  Index col = 0;
  for (Index i = 0; i < m; ++i) {
    const auto count = static_cast<Index>(batch.indices[static_cast<std::size_t>(i)].size());
    if (count > 0) out.d_contexts.col(i) += d_inputs.block(d, col, k, count).rowwise().sum();
    col += count;

    const double t = params.raw_precisions[i];
    const double tau = softplus(t);
    out.terms.context_prior += context_log_prior(params.contexts.col(i));
    out.terms.precision_prior += precision_log_prior(tau, priors);
    out.d_contexts.col(i) -= params.contexts.col(i);
    out.d_raw_precisions[i] += (priors.alpha - 1.0) / tau - priors.beta;
    out.d_raw_precisions[i] *= sigmoid(t);
  }
  out.terms.theta_prior = theta_log_prior(params.theta, priors);
  out.d_theta -= params.theta / (priors.theta_sigma * priors.theta_sigma);
  out.value = out.terms.total();
  return out;
}

ObjectiveGradient full_gradient(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net,
                                const PriorConfig& priors) {
  return stochastic_gradient(params, data, full_batch(data), net, priors);
}

Vector flatten(const ModelParams& params) {
  const Index nt = params.theta.size(), nc = params.contexts.size();
  Vector flat(nt + nc + params.raw_precisions.size());
  flat << params.theta, params.contexts.reshaped(), params.raw_precisions;
  return flat;
}

Vector flatten(const ObjectiveGradient& grad) {
  const Index nt = grad.d_theta.size(), nc = grad.d_contexts.size();
  Vector flat(nt + nc + grad.d_raw_precisions.size());
  flat << grad.d_theta, grad.d_contexts.reshaped(), grad.d_raw_precisions;
  return flat;
}

void unflatten(const Eigen::Ref<const Vector>& flat, ModelParams& params) {
  const Index nt = params.theta.size(), nc = params.contexts.size(), nr = params.raw_precisions.size();
  if (flat.size() != nt + nc + nr) throw DimensionError("flat parameter vector has the wrong length");
  params.theta = flat.head(nt);
  params.contexts.reshaped() = flat.segment(nt, nc);
  params.raw_precisions = flat.tail(nr);
}

AdamOptimizer::AdamOptimizer(Index size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void AdamOptimizer::step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& gradient, double learning_rate) {
  if (params.size() != m_.size() || gradient.size() != m_.size())
    throw DimensionError("Adam state size does not match parameters");
  ++steps_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  params.array() += learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

ModelParams initial_params(const NetworkSpec& net, Index unit_count, const PriorConfig& priors,
                           const TrainConfig& cfg) {
  ModelParams p;
  p.theta = init_params(net, cfg.seed);
  p.contexts = Matrix::Zero(net.context_dim, unit_count);
  const double tau0 = cfg.initial_precision > 0 ? cfg.initial_precision : priors.alpha / priors.beta;
  p.raw_precisions = Vector::Constant(unit_count, softplus_inverse(tau0));
  return p;
}

double validation_mse(const ModelParams& params, const MultiUnitDataset& data, const NetworkSpec& net,
                      ValidationAveraging averaging) {
  double sum = 0.0, unit_sum = 0.0;
  std::size_t count = 0, units = 0;
  for (std::size_t i = 0; i < data.unit_count(); ++i) {
    const auto& unit = data.units[i];
    if (unit.empty()) continue;
    const Vector pred = unit_predictions(unit, params.contexts.col(static_cast<Index>(i)), params.theta, net);
    double s = 0.0;
    for (std::size_t j = 0; j < unit.size(); ++j) {
      const double r = unit.observations[j].y - pred[static_cast<Index>(j)];
      s += r * r;
    }
    sum += s;
    count += unit.size();
    unit_sum += s / static_cast<double>(unit.size());
    ++units;
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return averaging == ValidationAveraging::per_observation ? sum / static_cast<double>(count)
                                                           : unit_sum / static_cast<double>(units);
}

FitResult fit(const MultiUnitDataset& train, const MultiUnitDataset& validation, const NetworkSpec& net,
              const PriorConfig& priors, const TrainConfig& cfg) {
  cfg.validate();
  priors.validate();
  net.validate();
  if (train.unit_count() != validation.unit_count())
    throw DimensionError("training and validation sets list different unit counts");
  for (std::size_t i = 0; i < train.unit_count(); ++i)
    if (train.units[i].unit_id != validation.units[i].unit_id)
      throw DimensionError("training and validation sets list units in different order");
  if (validation.total_observations() == 0)
    throw std::invalid_argument("fit needs at least one validation observation");
  const std::size_t n_total = train.total_observations();
  if (n_total == 0) throw std::invalid_argument("fit needs at least one training observation");
  if (!cfg.full_batch && cfg.batch_budget < train.unit_count())
    throw std::invalid_argument("batch budget is smaller than the unit count");

  FitResult result;
  result.net = net;
  result.priors = priors;
  result.seed = cfg.seed;
  result.epochs = cfg.epochs;
  for (const auto& u : train.units) result.unit_ids.push_back(u.unit_id);

  ModelParams params = initial_params(net, static_cast<Index>(train.unit_count()), priors, cfg);
  check_compatible(params, train, net);
  Vector state = flatten(params);
  AdamOptimizer adam(state.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const std::size_t iterations =
      cfg.full_batch ? 1 : (n_total + cfg.batch_budget - 1) / cfg.batch_budget;
  const MiniBatch all = full_batch(train);

  double best = std::numeric_limits<double>::infinity();
  result.params = params;
  result.history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double j_sum = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
      const ObjectiveGradient g = cfg.full_batch
                                      ? stochastic_gradient(params, train, all, net, priors)
                                      : stochastic_gradient(params, train, draw_minibatch(train, cfg.batch_budget, rng),
                                                            net, priors);
      const Vector flat_grad = flatten(g);
      if (!std::isfinite(g.value) || !flat_grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite objective at epoch " << epoch << " iteration " << it << " (" << describe_terms(g.terms)
            << ")";
        throw NumericalError(msg.str());
      }
      j_sum += g.value;
      adam.step(state, flat_grad, cfg.learning_rate);
      unflatten(state, params);
    }
    for (Index i = 0; i < params.unit_count(); ++i)
      if (!(params.precision(i) > 0))
        throw NumericalError("precision of unit " + std::to_string(i) + " collapsed at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.objective_estimate = j_sum / static_cast<double>(iterations);
    rec.validation_mse = validation_mse(params, validation, net, cfg.validation_averaging);
    if (!std::isfinite(rec.validation_mse))
      throw NumericalError("non-finite validation MSE at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (rec.validation_mse < best) {
      best = rec.validation_mse;
      result.params = params;
      result.selected_epoch = epoch;
    }
    if (cfg.progress_every > 0 && epoch % cfg.progress_every == 0)
      std::cerr << "epoch " << epoch << " objective " << rec.objective_estimate << " val_mse " << rec.validation_mse
                << '\n';
  }
  return result;
}

}  // namespace muss
