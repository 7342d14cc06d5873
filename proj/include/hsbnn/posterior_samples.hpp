#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace hsbnn {

enum class Method { Mcmc, Vi };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

/// Parameter draws from either engine, stored chain-major (all draws of chain
/// 0, then chain 1, ...). VI draws carry chain id 0.
struct PosteriorSamples {
  Method method = Method::Mcmc;
  Eigen::MatrixXd draws;  // S x J
  std::vector<int> chain_id;
  std::vector<double> accept_rate;  // per chain
  std::vector<double> step_size;    // per chain (final adapted epsilon)
  std::vector<int> divergences;     // per chain, post-warmup
  std::vector<int> layer_sizes;     // network architecture, empty for generic targets
  nlohmann::json config;            // engine settings used to produce the draws

  Eigen::Index num_draws() const noexcept { return draws.rows(); }
  Eigen::Index dim() const noexcept { return draws.cols(); }
  int num_chains() const;
  /// Row indices belonging to `chain`.
  std::vector<Eigen::Index> rows_of_chain(int chain) const;
  void validate() const;
};

// .post container: JSON header + little-endian float64 S x J draw matrix (row-major)
void write_posterior(const std::filesystem::path& path, const PosteriorSamples& samples);
PosteriorSamples read_posterior(const std::filesystem::path& path);

}  // namespace hsbnn
