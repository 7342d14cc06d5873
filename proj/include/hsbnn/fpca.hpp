#pragma once

// Functional PCA of spectra sampled on a common wavelength grid.
//
// Inner products use trapezoid quadrature weights w_b, <u, v> = sum_b w_b u_b v_b.
// The eigenfunctions solve  C W phi = lambda phi  with phi' W phi = 1, where C is
// the sample covariance (1/(n-1) normalisation) of the centred spectra.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsbnn/spectra_sim.hpp"

namespace hsbnn::fpca {

inline constexpr std::size_t kMaxComponents = 50;

struct FpcaBasis {
  sim::WavelengthGrid grid;
  Eigen::VectorXd mean;            // B
  Eigen::MatrixXd eigenfunctions;  // K_max x B, row k is phi_k
  Eigen::VectorXd eigenvalues;     // K_max, descending
  Eigen::VectorXd quad_weights;    // B
  double total_variance = 0.0;     // trace of the weighted covariance (all eigenvalues)
  std::size_t n_fit = 0;

  std::size_t max_components() const noexcept { return static_cast<std::size_t>(eigenvalues.size()); }
  std::size_t bands() const noexcept { return grid.size(); }
};

/// Trapezoid weights for a (possibly nonuniform) grid.
Eigen::VectorXd trapezoid_weights(const sim::WavelengthGrid& grid);

/// Fits the basis to the rows of `spectra` (n x B). Requires n >= 2 and finite
/// input. Each eigenfunction is signed so its largest-magnitude entry is positive.
FpcaBasis fit_fpca(const Eigen::MatrixXd& spectra, const sim::WavelengthGrid& grid);

/// First K scores of one spectrum.
Eigen::VectorXd project(const FpcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& spectrum,
                        std::size_t k);

/// First K scores of every row of `spectra`; returns n x K.
Eigen::MatrixXd project_rows(const FpcaBasis& basis, const Eigen::MatrixXd& spectra, std::size_t k);

/// mean + sum_k scores_k phi_k
Eigen::VectorXd reconstruct(const FpcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& scores);

/// sum_{k<=K} lambda_k / sum_k lambda_k over the K_max stored eigenvalues.
/// Defined as 1 when every eigenvalue is 0.
double explained_variance(const FpcaBasis& basis, std::size_t k);

/// Same numerator over the trace of the weighted covariance, i.e. including
/// the variance in components beyond K_max.
double explained_total_variance(const FpcaBasis& basis, std::size_t k);

void write_basis(const std::filesystem::path& path, const FpcaBasis& basis);
FpcaBasis read_basis(const std::filesystem::path& path);

struct PixelRef {
  std::string scene;
  int row = 0;
  int col = 0;

  /// "r<row>c<col>"
  std::string id() const;
  static PixelRef parse(const std::string& scene, const std::string& id);
  friend bool operator==(const PixelRef&, const PixelRef&) = default;
  friend auto operator<=>(const PixelRef&, const PixelRef&) = default;
};

struct FeatureMatrix {
  Eigen::MatrixXd scores;  // n x K
  std::vector<int> labels;
  std::vector<double> abundance;
  std::vector<PixelRef> pixels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(scores.cols()); }
  /// Checks row counts agree and labels[i] == (abundance[i] > 0).
  void validate() const;
};

/// Builds features for the listed pixels of one scene.
FeatureMatrix featurize(const FpcaBasis& basis, const sim::SceneCube& scene,
                        const std::vector<PixelRef>& pixels, std::size_t k);

/// Rows of `scene` for the listed pixels as an n x B double matrix.
Eigen::MatrixXd gather_spectra(const sim::SceneCube& scene, const std::vector<PixelRef>& pixels);

// CSV: pixel_id,scene,abundance,label,pc_1..pc_K
void write_features_csv(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_features_csv(const std::filesystem::path& path);

}  // namespace hsbnn::fpca
