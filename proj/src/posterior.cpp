#include "muss/posterior.hpp"

#include "muss/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>

namespace muss {

Matrix context_hessian(const FitResult& base, const UnitDataset& data, const Eigen::Ref<const Vector>& context,
                       double precision, double step) {
  const Index k = context.size();
  Matrix h(k, k);
  Vector c = context;
  for (Index a = 0; a < k; ++a) {
    const double orig = c(a);
    c(a) = orig + step;
    const Vector g_plus = likelihood_context_gradient(base, data, c, precision);
    c(a) = orig - step;
    const Vector g_minus = likelihood_context_gradient(base, data, c, precision);
    c(a) = orig;
    h.col(a) = -(g_plus - g_minus) / (2.0 * step);
  }
  if (!h.allFinite()) throw NumericalError("context Hessian has non-finite entries");
  // The prior contributes exactly I; only the likelihood part is differenced.
  Matrix sym = 0.5 * (h + h.transpose());
  sym.diagonal().array() += 1.0;
  return sym;
}

LaplacePosterior laplace_posterior(const Matrix& hessian, const Vector& mean) {
  const Index k = hessian.rows();
  if (hessian.cols() != k || mean.size() != k) throw DimensionError("Hessian and mean dimensions disagree");
  const double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("laplace_posterior requires a symmetric Hessian");

  LaplacePosterior post;
  post.mean = mean;
  double jitter = 0.0;
  for (;;) {
    Eigen::LLT<Matrix> llt(hessian + jitter * Matrix::Identity(k, k));
    if (llt.info() == Eigen::Success) {
      post.covariance = llt.solve(Matrix::Identity(k, k));
      post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
      post.jitter = jitter;
      return post;
    }
    jitter = jitter == 0.0 ? 1e-6 : jitter * 10.0;
    if (jitter > 1e-2 * (1.0 + 1e-9))
      throw NumericalError("context Hessian is not positive-definite even with jitter 1e-2");
  }
}

InformationGain kl_to_standard_normal(const LaplacePosterior& post) {
  const Index k = post.mean.size();
  if (post.covariance.rows() != k || post.covariance.cols() != k)
    throw DimensionError("posterior covariance dimension does not match the mean");
  Eigen::LLT<Matrix> llt(post.covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior covariance is not positive-definite");
  double log_det = 0.0;
  for (Index i = 0; i < k; ++i) log_det += std::log(llt.matrixL()(i, i));
  log_det *= 2.0;
  InformationGain gain;
  // Rounding can leave a value of order 1e-16 below zero near the prior.
  gain.nats = std::max(0.0, 0.5 * (post.covariance.trace() + post.mean.squaredNorm() - static_cast<double>(k) - log_det));
  gain.bits = gain.nats * std::numbers::log2e;
  return gain;
}

std::vector<InformationGainPoint> information_gain_curve(const FitResult& base, const UnitDataset& unit,
                                                         const std::vector<FewShotStep>& sequence, std::size_t n_max,
                                                         const CalibrationConfig& cfg, bool record_failures) {
  std::vector<InformationGainPoint> curve;
  const std::size_t last = std::min(n_max, sequence.size());
  for (std::size_t n = 0; n <= last; ++n) {
    const UnitDataset subset = fewshot_training_set(unit, sequence, n);
    const CalibratedUnit cal = calibrate(base, subset, cfg);
    const Matrix h = context_hessian(base, subset, cal.context, cal.precision);
    try {
      curve.push_back({n, kl_to_standard_normal(laplace_posterior(h, cal.context))});
    } catch (const NumericalError&) {
      if (!record_failures) throw;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      curve.push_back({n, {nan, nan}, true});
    }
  }
  return curve;
}

}  // namespace muss
