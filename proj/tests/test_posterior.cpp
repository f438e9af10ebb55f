#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "muss/calib.hpp"
#include "muss/errors.hpp"
#include "muss/posterior.hpp"
#include "muss/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace muss;

namespace {

// D=2, K=3, hidden units held active by a large bias: f is affine in c, so
// ∇_c f = W2 W1[:, c] everywhere the test goes.
FitResult linear_head(double tau) {
  FitResult base;
  base.net = {2, 3, 3, 1};
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  Vector theta = Vector::NullaryExpr(base.net.parameter_count(), [&] { return 0.5 * nd(rng); });
  const Index bias = base.net.layer_offset(0) + 3 * 5;
  theta.segment(bias, 3).setConstant(20.0);
  base.params.theta = theta;
  base.params.contexts = Matrix::Zero(3, 1);
  base.params.raw_precisions = Vector::Constant(1, softplus_inverse(tau));
  base.unit_ids = {"b0"};
  return base;
}

Vector context_gradient_of_f(const FitResult& base) {
  const Vector& t = base.params.theta;
  Eigen::Map<const Eigen::Matrix<double, 3, 5, Eigen::RowMajor>> w1(t.data());
  Eigen::Map<const Eigen::RowVector3d> w2(t.data() + base.net.layer_offset(1));
  return (w2 * w1.rightCols(3)).transpose();
}

UnitDataset unit_points(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  UnitDataset u{"new", {}};
  for (int j = 0; j < n; ++j) {
    Observation o;
    o.x = Vector::NullaryExpr(2, [&] { return nd(rng); });
    o.y = nd(rng);
    o.timestamp = j;
    u.observations.push_back(o);
  }
  return u;
}

}  // namespace

TEST_CASE("Hessian with no data is the identity") {
  const FitResult base = linear_head(30.0);
  for (const Vector& c : {Vector(Vector::Zero(3)), Vector(Vector::Constant(3, 0.7))}) {
    const Matrix h = context_hessian(base, UnitDataset{"new", {}}, c, 30.0);
    CHECK(h == Matrix::Identity(3, 3));
    const LaplacePosterior post = laplace_posterior(h, Vector::Zero(3));
    CHECK(post.covariance == Matrix::Identity(3, 3));
    CHECK(post.jitter == 0.0);
    CHECK(kl_to_standard_normal(post).nats == 0.0);
  }
}

TEST_CASE("Hessian of a linear context head") {
  const double tau = 40.0;
  const FitResult base = linear_head(tau);
  const Vector g = context_gradient_of_f(base);
  for (int n : {1, 4}) {
    const UnitDataset data = unit_points(n, 3 + static_cast<std::uint64_t>(n));
    const Matrix expected = Matrix::Identity(3, 3) + tau * n * g * g.transpose();
    const Matrix h = context_hessian(base, data, Vector::Constant(3, 0.1), tau);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((h - expected).norm() <= 1e-3 * expected.norm());
  }
}

TEST_CASE("Hessian depends only on the unit's own data") {
  const FitResult base = linear_head(5.0);
  UnitDataset a = unit_points(3, 1), b = unit_points(3, 2);
  const Vector c = Vector::Constant(3, -0.2);
  const Matrix ha = context_hessian(base, a, c, 5.0);
  b.observations[0].y += 10.0;
  b.observations[1].x(0) -= 3.0;
  CHECK(context_hessian(base, a, c, 5.0) == ha);
  const FitResult other = linear_head(5.0);
  CHECK(context_hessian(other, a, c, 5.0) == ha);
}

TEST_CASE("non-finite Hessian aborts") {
  FitResult base = linear_head(5.0);
  base.params.theta(2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(context_hessian(base, unit_points(2, 1), Vector::Zero(3), 5.0), NumericalError);
}

TEST_CASE("Laplace covariance") {
  SUBCASE("diagonal") {
    Matrix h = Matrix::Zero(2, 2);
    h.diagonal() << 2, 4;
    const auto post = laplace_posterior(h, Vector::Zero(2));
    CHECK(post.covariance(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(post.covariance(1, 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(post.covariance(0, 1) == 0.0);
  }
  SUBCASE("correlated") {
    Matrix h(2, 2);
    h << 2, 1, 1, 2;
    const auto post = laplace_posterior(h, Vector::Zero(2));
    Matrix expected(2, 2);
    expected << 2.0 / 3, -1.0 / 3, -1.0 / 3, 2.0 / 3;
    CHECK((post.covariance - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(post.covariance == post.covariance.transpose());
  }
  SUBCASE("jitter rescues a singular Hessian") {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 1.0;
    const auto post = laplace_posterior(h, Vector::Zero(2));
    CHECK(post.jitter == doctest::Approx(1e-6));
    CHECK(post.covariance(1, 1) == doctest::Approx(1e6).epsilon(1e-9));
  }
  SUBCASE("escalation stops at 1e-2") {
    Matrix h = Matrix::Identity(2, 2);
    h(1, 1) = -5e-3;  // needs jitter 1e-2
    CHECK(laplace_posterior(h, Vector::Zero(2)).jitter == doctest::Approx(1e-2));
    h(1, 1) = -0.5;
    CHECK_THROWS_AS(laplace_posterior(h, Vector::Zero(2)), NumericalError);
  }
  SUBCASE("asymmetric input is rejected") {
    Matrix h = Matrix::Identity(2, 2);
    h(0, 1) = 0.3;
    CHECK_THROWS(laplace_posterior(h, Vector::Zero(2)));
  }
}

TEST_CASE("KL to the standard normal") {
  LaplacePosterior p{Vector::Zero(3), Matrix::Identity(3, 3), 0.0};
  auto g = kl_to_standard_normal(p);
  CHECK(g.nats == 0.0);
  CHECK(g.bits == 0.0);

  p = {Vector::Constant(1, 1.0), Matrix::Identity(1, 1), 0.0};
  CHECK(std::abs(kl_to_standard_normal(p).nats - 0.5) <= 1e-15);

  p = {Vector::Zero(2), 0.5 * Matrix::Identity(2, 2), 0.0};
  g = kl_to_standard_normal(p);
  CHECK(std::abs(g.nats - 0.19314718055994531) <= 1e-15);
  CHECK(std::abs(g.bits - g.nats * std::numbers::log2e) <= 1e-15);

  p.covariance(0, 0) = -1.0;
  CHECK_THROWS_AS(kl_to_standard_normal(p), NumericalError);
}

TEST_CASE("KL is nonnegative and vanishes only at the prior") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = 1 + trial % 5;
    Matrix a = Matrix::NullaryExpr(k, k, [&] { return nd(rng); });
    Matrix s = a * a.transpose() + 0.1 * Matrix::Identity(k, k);
    Vector mu = Vector::NullaryExpr(k, [&] { return 0.5 * nd(rng); });
    const auto g = kl_to_standard_normal({mu, s, 0.0});
    CHECK(g.nats >= 0.0);
    CHECK(g.nats > 1e-12);
    CHECK(std::abs(g.bits - g.nats * std::numbers::log2e) <= 1e-12 * std::max(1.0, g.bits));
  }
  // tiny departures from the prior give tiny positive values
  LaplacePosterior near{Vector::Constant(2, 1e-3), Matrix::Identity(2, 2), 0.0};
  const double nats = kl_to_standard_normal(near).nats;
  CHECK(nats == doctest::Approx(1e-6).epsilon(1e-6));
}

TEST_CASE("information gain over a sequence") {
  const FitResult base = linear_head(20.0);
  UnitDataset unit{"new", {}};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int d = 0; d < 90; ++d) {
    Observation o;
    o.x = Vector::NullaryExpr(2, [&] { return nd(rng); });
    o.y = nd(rng);
    o.timestamp = 1'600'000'000 + static_cast<std::int64_t>(d) * 86400;
    unit.observations.push_back(o);
  }
  const auto seq = sequential_fewshot_sequence(unit, 10);
  REQUIRE(seq.size() == 10);
  CalibrationConfig cfg;
  cfg.learning_rate = 1e-2;
  const auto curve = information_gain_curve(base, unit, seq, 10, cfg);
  REQUIRE(curve.size() == 11);
  CHECK(curve[0].gain.nats == 0.0);
  CHECK(curve[0].gain.bits == 0.0);
  for (const auto& p : curve) {
    CHECK(p.n <= 10);
    CHECK(std::isfinite(p.gain.nats));
    CHECK(p.gain.nats >= 0.0);
    CHECK(!p.posterior_failed);
  }
  // the Hessian grows with n on a linear head, so the log-det term dominates
  CHECK(curve[10].gain.nats > curve[1].gain.nats);
  CHECK(information_gain_curve(base, unit, seq, 3, cfg).size() == 4);
}
