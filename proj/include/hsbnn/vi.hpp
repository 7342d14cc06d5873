#pragma once

// Mean-field Gaussian variational inference (Bayes by Backprop style):
// q(theta) = prod_j N(mu_j, softplus(rho_j)^2), fitted by Adam on a
// reparameterised Monte Carlo estimate of the negative ELBO.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hsbnn/bnn_model.hpp"
#include "hsbnn/log_density.hpp"
#include "hsbnn/posterior_samples.hpp"

namespace hsbnn::vi {

double softplus(double x) noexcept;
double softplus_inverse(double y);

struct VariationalParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd rho;  // sd = softplus(rho)

  Eigen::VectorXd sd() const;
  Eigen::Index dim() const noexcept { return mu.size(); }
  /// mu + sd .* z
  Eigen::VectorXd transform(const Eigen::Ref<const Eigen::VectorXd>& z) const;
};

struct ViConfig {
  double learning_rate = 0.01;
  int epochs = 450;
  int mc_samples_per_step = 1;
  double validation_fraction = 0.1;
  double init_mu_sd = 0.1;   // mu ~ N(0, init_mu_sd^2)
  double init_sd = 0.1;      // rho = softplus^-1(init_sd)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ViFit {
  VariationalParams params;
  std::vector<double> train_loss;       // negative ELBO estimate per epoch
  std::vector<double> validation_loss;  // empty when no validation data
};

/// log q(theta) for theta = mu + sd .* z.
double log_q(const VariationalParams& vp, const Eigen::Ref<const Eigen::VectorXd>& z);

/// (1/n_mc) sum_s [log p(theta_s) - log q(theta_s)], theta_s = mu + sd .* noise.row(s).
double elbo_estimate(const VariationalParams& vp, const LogDensity& log_joint, const Eigen::MatrixXd& noise);

/// ELBO estimate and its reparameterised gradient in (mu, rho) for fixed noise.
double elbo_and_grad(const VariationalParams& vp, const LogDensity& log_joint,
                     const Eigen::MatrixXd& noise, Eigen::VectorXd& grad_mu, Eigen::VectorXd& grad_rho);

/// Runs `epochs` full-batch Adam steps on -ELBO(train). When `validation` is
/// given, its -ELBO estimate (same noise) is recorded each epoch. Returns the
/// final-epoch parameters.
ViFit fit_vi(const LogDensity& train, const LogDensityValue* validation, Eigen::Index dim,
             const ViConfig& config);

/// Splits `batch` into train/validation rows (seeded shuffle), builds the BNN
/// log joint for each part and fits. The validation log joint rescales its
/// likelihood by n_train / n_validation so both losses are on the same scale.
ViFit fit_vi(const bnn::Model& model, const bnn::LabeledBatch& batch, const ViConfig& config);

/// S i.i.d. draws mu + sd .* z tagged as VI.
PosteriorSamples draw_from_vi(const VariationalParams& vp, Eigen::Index draws, std::uint64_t seed);

// .vparams container: JSON header + little-endian float64 mu[J] then rho[J]
void write_vparams(const std::filesystem::path& path, const VariationalParams& vp,
                   const nlohmann::json& extra = {});
VariationalParams read_vparams(const std::filesystem::path& path);

}  // namespace hsbnn::vi
