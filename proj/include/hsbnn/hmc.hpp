#pragma once

// Hamiltonian Monte Carlo with an identity mass matrix, a jittered fixed
// number of leapfrog steps, and dual-averaging step-size adaptation during
// warmup. Chains run concurrently, each on its own RNG stream derived from
// (seed, chain index).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hsbnn/bnn_model.hpp"
#include "hsbnn/error.hpp"
#include "hsbnn/log_density.hpp"
#include "hsbnn/posterior_samples.hpp"

namespace hsbnn::hmc {

struct HmcConfig {
  int chains = 2;
  int iterations = 2500;  // per chain, warmup included
  int warmup = 500;
  double target_accept = 0.8;
  int leapfrog_steps = 32;
  double step_jitter = 0.2;  // L drawn uniformly from [L(1-j), L(1+j)]
  double init_sd = 0.1;
  /// Initial step size; found by the doubling heuristic when unset. With
  /// warmup == 0 this is the step size used for every draw.
  std::optional<double> step_size;
  double max_divergent_fraction = 0.5;
  double divergence_threshold = 1000.0;  // energy error that counts as divergent
  std::uint64_t seed = 0;
  int threads = 0;  // 0: resolve_threads()

  int kept() const noexcept { return iterations - warmup; }
  void validate() const;
  nlohmann::json to_json() const;
};

/// Dual-averaging parameters (gamma, t0, kappa) for step-size adaptation.
struct DualAveraging {
  explicit DualAveraging(double initial_step, double target = 0.8, double gamma = 0.05,
                         double t0 = 10.0, double kappa = 0.75);

  /// Feeds one acceptance statistic and returns the next step size.
  double update(double accept_prob);
  /// Averaged step size to freeze after warmup.
  double final_step() const;

 private:
  double mu_, target_, gamma_, t0_, kappa_;
  double h_bar_ = 0.0;
  double log_eps_bar_ = 0.0;
  int m_ = 0;
};

/// Warmup iterations after which step-size adaptation restarts from the
/// current averaged step: the end of a 75-iteration initial buffer, then the
/// ends of doubling windows starting at 25. The last window runs to the end of
/// warmup and provides the frozen step. A single restart at 15% of warmup when
/// warmup < 150; none when warmup < 20.
std::vector<int> adaptation_restarts(int warmup);

struct LeapfrogState {
  Eigen::VectorXd theta;
  Eigen::VectorXd momentum;
  Eigen::VectorXd grad;  // gradient of log density at theta
  double log_density = 0.0;
  bool divergent = false;
};

/// `steps` leapfrog steps under H = -log p(theta) + p'p/2. `start.grad` and
/// `start.log_density` must hold the values at `start.theta`. A non-finite
/// state stops integration and sets `divergent`.
LeapfrogState leapfrog(const LeapfrogState& start, double epsilon, int steps, const LogDensity& f);

/// Convenience overload that evaluates the density at theta first.
LeapfrogState leapfrog(const Eigen::VectorXd& theta, const Eigen::VectorXd& momentum,
                       double epsilon, int steps, const LogDensity& f);

double hamiltonian(const LeapfrogState& s);

/// Thrown when warmup produces too many divergent proposals.
class AdaptationError : public NumericalError {
 public:
  AdaptationError(const std::string& what, int chain, int divergent, int warmup, double step)
      : NumericalError(what), chain(chain), divergent(divergent), warmup(warmup), step_size(step) {}
  int chain, divergent, warmup;
  double step_size;
};

/// Samples `dim`-dimensional targets with theta0 ~ N(0, init_sd^2) per chain.
PosteriorSamples sample(const LogDensity& log_density, Eigen::Index dim, const HmcConfig& config);

/// Samples starting from explicit per-chain initial positions.
PosteriorSamples sample(const LogDensity& log_density, const std::vector<Eigen::VectorXd>& inits,
                        const HmcConfig& config);

/// Split-chain potential scale reduction for equal-length chains (each chain is
/// halved, giving 2m sequences). Returns 1 when all sequences are constant and
/// equal.
double split_rhat(const std::vector<std::vector<double>>& chains);

struct RhatReport {
  std::vector<Eigen::Index> probe_ids;
  std::vector<double> rhat;
  double threshold = 1.05;

  std::vector<bool> flagged() const;
  double max() const;
};

/// Split R-hat of the prediction traces pi(theta_s, x) for each row of probe_x.
RhatReport rhat_on_predictions(const PosteriorSamples& samples, const bnn::Model& model,
                               const Eigen::MatrixXd& probe_x, double threshold = 1.05);

}  // namespace hsbnn::hmc
