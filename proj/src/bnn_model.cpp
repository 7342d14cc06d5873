#include "hsbnn/bnn_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hsbnn/error.hpp"

namespace hsbnn::bnn {

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

}  // namespace

std::size_t Architecture::num_params() const {
  std::size_t j = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    j += static_cast<std::size_t>(layer_sizes[l] + 1) * static_cast<std::size_t>(layer_sizes[l + 1]);
  }
  return j;
}

std::size_t Architecture::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(layer_sizes[l] + 1) * static_cast<std::size_t>(layer_sizes[l + 1]);
  }
  return off;
}

void Architecture::validate() const {
  if (layer_sizes.size() < 3) throw ConfigError("architecture needs at least one hidden layer");
  if (layer_sizes.back() != 1) throw ConfigError("output layer must have width 1");
  for (int w : layer_sizes) {
    if (w < 1) throw ConfigError("layer widths must be positive");
  }
}

void LabeledBatch::validate(int input_dim) const {
  if (x.rows() != y.size()) throw ShapeError("batch x and y have different row counts");
  if (x.cols() != input_dim) {
    throw ShapeError("batch has " + std::to_string(x.cols()) + " features, network expects " +
                     std::to_string(input_dim));
  }
  if (!x.allFinite()) throw DataError("batch contains non-finite features");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("labels must be 0 or 1");
  }
}

LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b) {
  if (a.x.cols() != b.x.cols()) throw ShapeError("concat: feature counts differ");
  LabeledBatch out;
  out.x.resize(a.x.rows() + b.x.rows(), a.x.cols());
  out.x << a.x, b.x;
  out.y.resize(a.y.size() + b.y.size());
  out.y << a.y, b.y;
  return out;
}

Model::Model(Architecture arch, PriorSpec prior)
    : arch_(std::move(arch)), prior_(prior), num_params_(0) {
  arch_.validate();
  if (!(prior_.sd > 0.0)) throw ConfigError("prior sd must be positive");
  num_params_ = arch_.num_params();
}

void Model::check_theta(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != num_params_) {
    throw ShapeError("theta has " + std::to_string(theta.size()) + " entries, network has " +
                     std::to_string(num_params_));
  }
}

double Model::forward(const Eigen::VectorXd& theta, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return forward_batch(theta, x.transpose())[0];
}

Eigen::VectorXd Model::forward_batch(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x) const {
  check_theta(theta);
  if (x.cols() != arch_.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, network expects " +
                     std::to_string(arch_.input_dim()));
  }
  Eigen::MatrixXd a = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    const int in = arch_.layer_sizes[l];
    const int out = arch_.layer_sizes[l + 1];
    // row-major out x in weights == column-major in x out, i.e. W^T
    ConstMap wt(theta.data() + off, in, out);
    ConstVecMap b(theta.data() + off + static_cast<std::size_t>(in) * out, out);
    Eigen::MatrixXd z = a * wt;
    z.rowwise() += b.transpose();
    a = sigmoid(z);
    off += static_cast<std::size_t>(in + 1) * out;
  }
  return a.col(0);
}

double Model::log_prior(const Eigen::VectorXd& theta) const {
  check_theta(theta);
  const double j = static_cast<double>(num_params_);
  const double sd = prior_.sd;
  const double norm = 0.5 * std::log(2.0 * std::numbers::pi) + std::log(sd);
  return -j * norm - (theta.array() - prior_.mean).square().sum() / (2.0 * sd * sd);
}

void Model::add_log_prior_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  grad.array() -= (theta.array() - prior_.mean) / (prior_.sd * prior_.sd);
}

double Model::log_likelihood(const Eigen::VectorXd& theta, const LabeledBatch& batch) const {
  if (batch.size() == 0) throw DataError("log_likelihood: empty batch");
  if (batch.x.rows() != batch.y.size()) throw ShapeError("batch x and y have different row counts");
  const Eigen::VectorXd pi = forward_batch(theta, batch.x);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    const double p = std::clamp(pi[i], kProbClamp, 1.0 - kProbClamp);
    ll += batch.y[i] * std::log(p) + (1.0 - batch.y[i]) * std::log1p(-p);
  }
  return ll;
}

double Model::log_likelihood_and_grad(const Eigen::VectorXd& theta, const LabeledBatch& batch,
                                      Eigen::VectorXd& grad) const {
  check_theta(theta);
  if (batch.size() == 0) throw DataError("log_likelihood: empty batch");
  if (batch.x.cols() != arch_.input_dim() || batch.x.rows() != batch.y.size()) {
    throw ShapeError("batch shape does not match the network");
  }
  const std::size_t layers = arch_.num_layers();
  std::vector<Eigen::MatrixXd> acts(layers + 1);
  acts[0] = batch.x;
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = arch_.layer_sizes[l];
    const int out = arch_.layer_sizes[l + 1];
    ConstMap wt(theta.data() + off, in, out);
    ConstVecMap b(theta.data() + off + static_cast<std::size_t>(in) * out, out);
    Eigen::MatrixXd z = acts[l] * wt;
    z.rowwise() += b.transpose();
    acts[l + 1] = sigmoid(z);
    off += static_cast<std::size_t>(in + 1) * out;
  }

  const auto n = batch.size();
  double ll = 0.0;
  // d ll / d z at the output pre-activation; zero where the clamp is active
  Eigen::MatrixXd delta(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double raw = acts[layers](i, 0);
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double y = batch.y[i];
    ll += y * std::log(p) + (1.0 - y) * std::log1p(-p);
    delta(i, 0) = (raw == p) ? (y - p) : 0.0;
  }

  grad.setZero(static_cast<Eigen::Index>(num_params_));
  for (std::size_t l = layers; l-- > 0;) {
    const int in = arch_.layer_sizes[l];
    const int out = arch_.layer_sizes[l + 1];
    const std::size_t start = arch_.layer_offset(l);
    Eigen::Map<Eigen::MatrixXd> gwt(grad.data() + start, in, out);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + start + static_cast<std::size_t>(in) * out, out);
    gwt.noalias() = acts[l].transpose() * delta;
    gb = delta.colwise().sum().transpose();
    if (l > 0) {
      ConstMap wt(theta.data() + start, in, out);
      Eigen::MatrixXd back = delta * wt.transpose();
      delta = back.cwiseProduct((acts[l].array() * (1.0 - acts[l].array())).matrix());
    }
  }
  return ll;
}

double Model::log_posterior_and_grad(const Eigen::VectorXd& theta, const LabeledBatch& batch,
                                     Eigen::VectorXd& grad) const {
  const double value = log_likelihood_and_grad(theta, batch, grad) + log_prior(theta);
  add_log_prior_grad(theta, grad);
  if (!std::isfinite(value)) throw NumericalError("log posterior is not finite");
  for (Eigen::Index j = 0; j < grad.size(); ++j) {
    if (!std::isfinite(grad[j])) {
      throw NumericalError("non-finite log-posterior gradient at parameter index " + std::to_string(j));
    }
  }
  return value;
}

LogDensity make_log_posterior(const Model& model, LabeledBatch batch) {
  batch.validate(model.architecture().input_dim());
  return [model, batch = std::move(batch)](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return model.log_posterior_and_grad(theta, batch, grad);
  };
}

}  // namespace hsbnn::bnn
