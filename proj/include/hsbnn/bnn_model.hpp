#pragma once

// Fully connected sigmoid network with a Bernoulli likelihood and i.i.d.
// Gaussian priors on every weight and bias.
//
// Parameter layout (portable across sample files): layers in order; within a
// layer the out x in weight matrix row-major, followed by the out biases.
// The default 25-10-10-10-1 network has 491 parameters.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "hsbnn/log_density.hpp"

namespace hsbnn::bnn {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the
/// likelihood only.
inline constexpr double kProbClamp = 1e-12;

struct Architecture {
  std::vector<int> layer_sizes{25, 10, 10, 10, 1};

  std::size_t num_layers() const noexcept { return layer_sizes.size() - 1; }
  int input_dim() const { return layer_sizes.front(); }
  std::size_t num_params() const;
  /// Offset of the first weight of `layer` in the flattened vector.
  std::size_t layer_offset(std::size_t layer) const;
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct PriorSpec {
  double mean = 0.0;
  double sd = 10.0;
};

struct LabeledBatch {
  Eigen::MatrixXd x;  // n x K
  Eigen::VectorXd y;  // n, values in {0, 1}

  Eigen::Index size() const noexcept { return x.rows(); }
  void validate(int input_dim) const;
};

/// Stacks `b` under `a`.
LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b);

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

class Model {
 public:
  explicit Model(Architecture arch = {}, PriorSpec prior = {});

  const Architecture& architecture() const noexcept { return arch_; }
  const PriorSpec& prior() const noexcept { return prior_; }
  std::size_t num_params() const noexcept { return num_params_; }

  /// Unclamped network output for one input row.
  double forward(const Eigen::VectorXd& theta, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Unclamped outputs for every row of `x`.
  Eigen::VectorXd forward_batch(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x) const;

  double log_prior(const Eigen::VectorXd& theta) const;
  /// Adds d log_prior / d theta into grad.
  void add_log_prior_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;

  double log_likelihood(const Eigen::VectorXd& theta, const LabeledBatch& batch) const;

  /// Log likelihood and its gradient (grad is overwritten).
  double log_likelihood_and_grad(const Eigen::VectorXd& theta, const LabeledBatch& batch,
                                 Eigen::VectorXd& grad) const;

  /// Unnormalised log posterior and its exact gradient. Throws NumericalError
  /// naming the first non-finite parameter-gradient index.
  double log_posterior_and_grad(const Eigen::VectorXd& theta, const LabeledBatch& batch,
                                Eigen::VectorXd& grad) const;

 private:
  void check_theta(const Eigen::VectorXd& theta) const;

  Architecture arch_;
  PriorSpec prior_;
  std::size_t num_params_;
};

/// Log posterior of `model` given `batch` as a LogDensity. The batch is
/// captured by value.
LogDensity make_log_posterior(const Model& model, LabeledBatch batch);

}  // namespace hsbnn::bnn
