#include "muss/net.hpp"

#include "muss/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace muss {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_theta(const NetworkSpec& spec, Index size) {
  if (size != spec.parameter_count())
    throw DimensionError("theta has " + std::to_string(size) + " entries, network expects " +
                         std::to_string(spec.parameter_count()));
}

}  // namespace

NetworkSpec NetworkSpec::full_scale(Index input_dim) { return {input_dim, 10, 400, 4}; }

Index NetworkSpec::layer_inputs(Index layer) const { return layer == 0 ? input_dim + context_dim : hidden_width; }

Index NetworkSpec::layer_outputs(Index layer) const { return layer == hidden_depth ? 1 : hidden_width; }

Index NetworkSpec::layer_offset(Index layer) const {
  Index off = 0;
  for (Index l = 0; l < layer; ++l) off += layer_outputs(l) * (layer_inputs(l) + 1);
  return off;
}

Index NetworkSpec::parameter_count() const { return layer_offset(layer_count()); }

void NetworkSpec::validate() const {
  if (input_dim < 1 || context_dim < 1 || hidden_width < 1 || hidden_depth < 1)
    throw ConfigError("network dimensions must all be at least 1");
}

Vector concat_input(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& c) {
  Vector in(x.size() + c.size());
  in << x, c;
  return in;
}

BatchEvaluator::BatchEvaluator(const NetworkSpec& spec, std::span<const double> theta) : spec_(spec), theta_(theta) {
  check_theta(spec_, static_cast<Index>(theta_.size()));
  pre_.resize(static_cast<std::size_t>(spec_.hidden_depth));
  act_.resize(static_cast<std::size_t>(spec_.hidden_depth));
}

void BatchEvaluator::rebind(std::span<const double> theta) {
  check_theta(spec_, static_cast<Index>(theta.size()));
  theta_ = theta;
}

const Eigen::RowVectorXd& BatchEvaluator::forward(const Eigen::Ref<const Matrix>& inputs) {
  if (inputs.rows() != spec_.input_dim + spec_.context_dim)
    throw DimensionError("network input has " + std::to_string(inputs.rows()) + " rows, expected " +
                         std::to_string(spec_.input_dim + spec_.context_dim));
  input_ = inputs;
  const Matrix* a = &input_;
  for (Index l = 0; l < spec_.hidden_depth; ++l) {
    const Index out = spec_.layer_outputs(l), in = spec_.layer_inputs(l);
    const double* p = theta_.data() + spec_.layer_offset(l);
    RowMajorMap w(p, out, in);
    Eigen::Map<const Vector> b(p + out * in, out);
    auto& z = pre_[static_cast<std::size_t>(l)];
    z.noalias() = w * (*a);
    z.colwise() += b;
    act_[static_cast<std::size_t>(l)].noalias() = z.cwiseMax(0.0);
    a = &act_[static_cast<std::size_t>(l)];
  }
  const Index last = spec_.hidden_depth;
  const double* p = theta_.data() + spec_.layer_offset(last);
  Eigen::Map<const Eigen::RowVectorXd> w(p, spec_.hidden_width);
  output_.noalias() = w * (*a);
  output_.array() += p[spec_.hidden_width];
  return output_;
}

void BatchEvaluator::backward(const Eigen::Ref<const Eigen::RowVectorXd>& upstream, Eigen::Ref<Vector> d_theta,
                              Matrix* d_inputs) {
  check_theta(spec_, d_theta.size());
  if (upstream.size() != output_.size()) throw DimensionError("upstream size does not match the last forward batch");

  const Index last = spec_.hidden_depth;
  const Index width = spec_.hidden_width;
  {
    double* g = d_theta.data() + spec_.layer_offset(last);
    Eigen::Map<Eigen::RowVectorXd> gw(g, width);
    gw.noalias() += upstream * act_.back().transpose();
    g[width] += upstream.sum();
  }
  const double* p_last = theta_.data() + spec_.layer_offset(last);
  Eigen::Map<const Vector> w_last(p_last, width);
  Matrix& delta = delta_;
  delta.noalias() = w_last * upstream;  // width × n

  for (Index l = spec_.hidden_depth - 1; l >= 0; --l) {
    const auto& z = pre_[static_cast<std::size_t>(l)];
    delta = (z.array() > 0.0).select(delta, 0.0);
    const Index out = spec_.layer_outputs(l), in = spec_.layer_inputs(l);
    const Matrix& a = l == 0 ? input_ : act_[static_cast<std::size_t>(l - 1)];
    double* g = d_theta.data() + spec_.layer_offset(l);
    RowMajorMutMap gw(g, out, in);
    gw.noalias() += delta * a.transpose();
    Eigen::Map<Vector>(g + out * in, out) += delta.rowwise().sum();
    RowMajorMap w(theta_.data() + spec_.layer_offset(l), out, in);
    if (l > 0) {
      scratch_.noalias() = w.transpose() * delta;
      delta.swap(scratch_);
    } else if (d_inputs != nullptr) {
      d_inputs->noalias() = w.transpose() * delta;
    }
  }
}

double forward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& c, const Vector& theta,
               const NetworkSpec& spec) {
  if (x.size() != spec.input_dim || c.size() != spec.context_dim)
    throw DimensionError("forward: input or context dimension does not match the network");
  BatchEvaluator eval(spec, {theta.data(), static_cast<std::size_t>(theta.size())});
  return eval.forward(concat_input(x, c))(0);
}

GradientBundle forward_backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& c,
                                const Vector& theta, const NetworkSpec& spec, double upstream) {
  if (x.size() != spec.input_dim || c.size() != spec.context_dim)
    throw DimensionError("forward_backward: input or context dimension does not match the network");
  BatchEvaluator eval(spec, {theta.data(), static_cast<std::size_t>(theta.size())});
  GradientBundle out;
  out.value = eval.forward(concat_input(x, c))(0);
  out.d_theta = Vector::Zero(theta.size());
  Matrix d_in;
  Eigen::RowVectorXd up(1);
  up(0) = upstream;
  eval.backward(up, out.d_theta, &d_in);
  out.d_input = d_in.col(0).head(spec.input_dim);
  out.d_context = d_in.col(0).tail(spec.context_dim);
  return out;
}

Vector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Vector theta = Vector::Zero(spec.parameter_count());
  for (Index l = 0; l < spec.layer_count(); ++l) {
    const Index out = spec.layer_outputs(l), in = spec.layer_inputs(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    double* w = theta.data() + spec.layer_offset(l);
    for (Index k = 0; k < out * in; ++k) w[k] = dist(rng);
  }
  return theta;
}

}  // namespace muss
