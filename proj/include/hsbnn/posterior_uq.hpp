#pragma once

// Per-pixel predictive posteriors of the target probability, credible
// intervals and high/low-confidence set membership.
//
// HC:  P(pi < lower | Y) > 1 - alpha  or  P(pi > upper | Y) > 1 - alpha
// LC:  q_lo < lower  and  q_hi > upper, with (q_lo, q_hi) the central
//      1 - alpha credible interval.
// Probabilities are empirical fractions of posterior draws; ties at a
// threshold count as non-membership.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hsbnn/bnn_model.hpp"
#include "hsbnn/fpca.hpp"
#include "hsbnn/posterior_samples.hpp"

namespace hsbnn::uq {

struct HcConfig {
  double lower = 0.2;
  double upper = 0.8;
  double alpha = 0.2;

  void validate() const;
};

/// pi(theta_s, x) for every stored draw, in storage (chain-major) order.
Eigen::VectorXd predictive_draws(const PosteriorSamples& samples, const bnn::Model& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& x);

/// S x n matrix of predictive draws for every row of x.
Eigen::MatrixXd predictive_matrix(const PosteriorSamples& samples, const bnn::Model& model,
                                  const Eigen::MatrixXd& x);

/// Empirical quantile with linear interpolation between order statistics
/// (h = (S-1) p). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double p);

/// (Q(alpha/2), Q(1 - alpha/2)) of the draws.
std::pair<double, double> credible_interval(std::span<const double> draws, double alpha);

/// Fraction of draws strictly below / above a threshold.
double fraction_below(std::span<const double> draws, double threshold);
double fraction_above(std::span<const double> draws, double threshold);

bool hc_membership(std::span<const double> draws, const HcConfig& config);
bool lc_membership(std::span<const double> draws, const HcConfig& config, double alpha);

struct PixelSummary {
  double mean = 0.0;
  double q_lo = 0.0;
  double q_hi = 0.0;
  double p_below = 0.0;
  double p_above = 0.0;
  bool hc = false;
  bool lc = false;
};

PixelSummary summarize(std::span<const double> draws, const HcConfig& config);

struct PredictiveSummary {
  std::vector<fpca::PixelRef> pixels;
  std::vector<double> abundance;
  std::vector<PixelSummary> stats;

  std::size_t size() const noexcept { return stats.size(); }
  std::vector<double> means() const;
  std::vector<bool> hc_mask() const;
  std::vector<bool> lc_mask() const;
};

/// Summaries for every row of a feature matrix.
PredictiveSummary summarize_features(const PosteriorSamples& samples, const bnn::Model& model,
                                     const fpca::FeatureMatrix& features, const HcConfig& config);

// CSV: pixel_id,scene,abundance,mean,q_lo,q_hi,p_below,p_above,hc,lc
void write_summary_csv(const std::filesystem::path& path, const PredictiveSummary& summary);
PredictiveSummary read_summary_csv(const std::filesystem::path& path);

}  // namespace hsbnn::uq
