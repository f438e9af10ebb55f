#include "muss/core.hpp"

#include "muss/errors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace muss {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::validation;
  if (s == "test") return Split::test;
  if (s == "none" || s.empty()) return Split::none;
  throw std::invalid_argument("unknown split label '" + s + "'");
}

std::size_t MultiUnitDataset::total_observations() const {
  std::size_t n = 0;
  for (const auto& u : units) n += u.size();
  return n;
}

Index MultiUnitDataset::input_dim() const {
  for (const auto& u : units)
    if (!u.empty()) return u.observations.front().x.size();
  return 0;
}

void MultiUnitDataset::validate() const {
  std::unordered_set<std::string> ids;
  const Index d = input_dim();
  for (const auto& u : units) {
    if (!ids.insert(u.unit_id).second)
      throw std::invalid_argument("duplicate unit id '" + u.unit_id + "'");
    for (std::size_t j = 0; j < u.size(); ++j) {
      const auto& o = u.observations[j];
      if (o.x.size() != d)
        throw DimensionError("unit '" + u.unit_id + "' has an observation of dimension " +
                             std::to_string(o.x.size()) + ", expected " + std::to_string(d));
      if (!o.x.allFinite() || !std::isfinite(o.y))
        throw std::invalid_argument("unit '" + u.unit_id + "' has a non-finite observation");
      if (j > 0 && o.timestamp < u.observations[j - 1].timestamp)
        throw std::invalid_argument("unit '" + u.unit_id + "' timestamps are not sorted");
    }
  }
}

std::ptrdiff_t MultiUnitDataset::find(const std::string& unit_id) const {
  for (std::size_t i = 0; i < units.size(); ++i)
    if (units[i].unit_id == unit_id) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

void PriorConfig::validate() const {
  if (!(theta_sigma > 0) || !(alpha > 0) || !(beta > 0))
    throw ConfigError("prior parameters theta_sigma, alpha and beta must be strictly positive");
}

double ModelParams::precision(Index unit) const { return softplus(raw_precisions[unit]); }

Vector ModelParams::precisions() const { return raw_precisions.unaryExpr([](double t) { return softplus(t); }); }

double softplus(double t) {
  if (t > 30.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double softplus_inverse(double tau) {
  if (!(tau > 0)) throw std::domain_error("softplus_inverse requires tau > 0");
  if (tau > 30.0) return tau + std::log1p(-std::exp(-tau));
  return std::log(std::expm1(tau));
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double gaussian_log_density(double y, double mean, double precision) {
  if (!(precision > 0)) throw std::domain_error("gaussian_log_density requires precision > 0");
  const double r = y - mean;
  return 0.5 * (std::log(precision) - kLog2Pi) - 0.5 * precision * r * r;
}

double context_log_prior(const Eigen::Ref<const Vector>& c) {
  return -0.5 * static_cast<double>(c.size()) * kLog2Pi - 0.5 * c.squaredNorm();
}

double precision_log_prior(double tau, const PriorConfig& cfg) {
  if (!(tau > 0)) throw std::domain_error("precision_log_prior requires tau > 0");
  return cfg.alpha * std::log(cfg.beta) - std::lgamma(cfg.alpha) + (cfg.alpha - 1.0) * std::log(tau) -
         cfg.beta * tau;
}

double theta_log_prior(const Eigen::Ref<const Vector>& theta, const PriorConfig& cfg) {
  const double var = cfg.theta_sigma * cfg.theta_sigma;
  const double n = static_cast<double>(theta.size());
  return -0.5 * n * (kLog2Pi + std::log(var)) - 0.5 * theta.squaredNorm() / var;
}

double log_prior(const ModelParams& params, const PriorConfig& cfg) {
  double total = 0.0;
  for (Index i = 0; i < params.unit_count(); ++i)
    total += context_log_prior(params.contexts.col(i)) + precision_log_prior(params.precision(i), cfg);
  return total + theta_log_prior(params.theta, cfg);
}

}  // namespace muss
