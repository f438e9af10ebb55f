#pragma once

// Feed-forward network f(x; c, θ): the input is the concatenation [x, c],
// followed by `hidden_depth` affine + ReLU layers of `hidden_width` units and a
// final affine layer producing a scalar.
//
// θ layout: layers in order; for each layer the row-major (out × in) weight
// block followed by the bias block (out).

#include "muss/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace muss {

struct NetworkSpec {
  Index input_dim = 7;
  Index context_dim = 4;
  Index hidden_width = 64;
  Index hidden_depth = 3;

  /// Width 400, depth 4, K = 10.
  static NetworkSpec full_scale(Index input_dim);

  Index layer_count() const { return hidden_depth + 1; }
  Index layer_inputs(Index layer) const;
  Index layer_outputs(Index layer) const;
  /// Offset of the layer's weight block in θ; its bias block follows the weights.
  Index layer_offset(Index layer) const;
  Index parameter_count() const;
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct GradientBundle {
  double value = 0.0;  // network output
  Vector d_theta;      // aligned with θ layout
  Vector d_context;    // K
  Vector d_input;      // D
};

double forward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& c, const Vector& theta,
               const NetworkSpec& spec);

/// Gradients of upstream · f with respect to θ, c and x.
GradientBundle forward_backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& c,
                                const Vector& theta, const NetworkSpec& spec, double upstream);

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
Vector init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Evaluates the network on a batch of inputs stored column-wise
/// ((D + K) × n) and back-propagates per-sample upstream weights. Holds the
/// activations of the last forward call; θ must outlive the evaluator.
class BatchEvaluator {
 public:
  BatchEvaluator(const NetworkSpec& spec, std::span<const double> theta);

  const Eigen::RowVectorXd& forward(const Eigen::Ref<const Matrix>& inputs);

  /// Accumulates ∑_s upstream_s ∇_θ f(input_s) into d_theta and writes
  /// upstream_s ∇_input f(input_s) into column s of d_inputs (if non-null).
  void backward(const Eigen::Ref<const Eigen::RowVectorXd>& upstream, Eigen::Ref<Vector> d_theta,
                Matrix* d_inputs);

  /// Points the evaluator at a new θ of the same shape; buffers are kept.
  void rebind(std::span<const double> theta);

  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  std::span<const double> theta_;
  Matrix input_;
  std::vector<Matrix> pre_;   // pre-activations of hidden layers
  std::vector<Matrix> act_;   // post-ReLU activations of hidden layers
  Eigen::RowVectorXd output_;
  Matrix delta_, scratch_;    // backward buffers, reused across calls
};

/// Stacks x (D) and c (K) into one network input column.
Vector concat_input(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& c);

}  // namespace muss
