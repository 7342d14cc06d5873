#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hsbnn/error.hpp"
#include "hsbnn/fpca.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hsbnn;
using namespace hsbnn::fpca;

namespace {

// Smooth random curves: a few random Gaussian bumps per row.
Eigen::MatrixXd random_curves(const sim::WavelengthGrid& grid, int n, std::uint64_t seed, double noise = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(grid.size()));
  const double lo = grid.lambda.front(), hi = grid.lambda.back();
  for (int i = 0; i < n; ++i) {
    const double a1 = z(rng), a2 = z(rng), a3 = 0.3 * z(rng), c = lo + (hi - lo) * u(rng);
    for (std::size_t b = 0; b < grid.size(); ++b) {
      const double l = grid.lambda[b];
      x(i, static_cast<Eigen::Index>(b)) = 0.5 + 0.1 * a1 * std::sin(2 * l) + 0.05 * a2 * std::cos(3 * l) +
                                           0.05 * a3 * std::exp(-std::pow((l - c) / 0.2, 2)) + noise * z(rng);
    }
  }
  return x;
}

double weighted_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& w) {
  return (a.cwiseProduct(b).cwiseProduct(w)).sum();
}

}  // namespace

TEST(Trapezoid, MatchesOracleAndIntegratesLinear) {
  const auto grid = sim::WavelengthGrid::uniform(211);
  const auto w = trapezoid_weights(grid);
  const auto ref = oracle::trapezoid(grid.lambda);
  for (std::size_t b = 0; b < grid.size(); ++b) EXPECT_NEAR(w[static_cast<Eigen::Index>(b)], ref[b], 1e-15);
  EXPECT_NEAR(w.sum(), 2.1, 1e-12);
}

TEST(FitFpca, IdenticalSpectraHaveZeroVariance) {
  const auto grid = sim::WavelengthGrid::uniform(31);
  Eigen::MatrixXd x = random_curves(grid, 1, 1).replicate(10, 1);
  const auto basis = fit_fpca(x, grid);
  EXPECT_LE(basis.eigenvalues.cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::VectorXd scores = project(basis, x.row(3).transpose(), 5);
  EXPECT_LE(scores.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(explained_variance(basis, 1), 1.0);
}

TEST(FitFpca, RankOneData) {
  const auto grid = sim::WavelengthGrid::uniform(41);
  Eigen::VectorXd mean(41), f(41);
  for (int b = 0; b < 41; ++b) {
    mean[b] = 0.3 + 0.01 * b;
    f[b] = std::sin(3.0 * grid.lambda[static_cast<std::size_t>(b)]);
  }
  Eigen::MatrixXd x(20, 41);
  for (int i = 0; i < 20; ++i) x.row(i) = (mean + (i % 2 ? 1.0 : -1.0) * (0.5 + 0.1 * i) * f).transpose();
  const auto basis = fit_fpca(x, grid);
  EXPECT_GT(basis.eigenvalues[0], 1e-3);
  EXPECT_LE(basis.eigenvalues.tail(basis.eigenvalues.size() - 1).maxCoeff(), 1e-12 * basis.eigenvalues[0]);
  EXPECT_NEAR(explained_variance(basis, 1), 1.0, 1e-12);
}

TEST(FitFpca, OrthonormalDescendingAndSigned) {
  const auto grid = sim::WavelengthGrid::uniform(61);
  const auto basis = fit_fpca(random_curves(grid, 200, 3, 0.01), grid);
  const auto& w = basis.quad_weights;
  const auto k = basis.eigenfunctions.rows();
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::VectorXd pi = basis.eigenfunctions.row(i).transpose();
    Eigen::Index arg = 0;
    pi.cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(pi[arg], 0.0);
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::VectorXd pj = basis.eigenfunctions.row(j).transpose();
      EXPECT_NEAR(weighted_dot(pi, pj, w), i == j ? 1.0 : 0.0, 1e-8);
    }
    if (i > 0) EXPECT_LE(basis.eigenvalues[i], basis.eigenvalues[i - 1]);
    EXPECT_GE(basis.eigenvalues[i], 0.0);
  }
  EXPECT_EQ(k, 50);
}

TEST(FitFpca, MatchesJacobiOracle) {
  const auto grid = sim::WavelengthGrid::uniform(81);
  const Eigen::MatrixXd x = random_curves(grid, 500, 9, 0.02);
  const auto basis = fit_fpca(x, grid);

  oracle::Matrix rows(500, std::vector<double>(81));
  for (int i = 0; i < 500; ++i) {
    for (int b = 0; b < 81; ++b) rows[i][b] = x(i, b);
  }
  const auto w = oracle::trapezoid(grid.lambda);
  const auto [values, vectors] = oracle::jacobi_eigen(oracle::weighted_covariance(rows, w));
  for (int k = 0; k < 10; ++k) {
    EXPECT_NEAR(basis.eigenvalues[k], values[k], 1e-6 * values[k]) << k;
    // eigenfunction = eigenvector / sqrt(w); compare up to sign
    double dot = 0.0;
    for (int b = 0; b < 81; ++b) dot += basis.eigenfunctions(k, b) * std::sqrt(w[b]) * vectors[b][k];
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-6) << k;
  }
}

TEST(FitFpca, Errors) {
  const auto grid = sim::WavelengthGrid::uniform(11);
  EXPECT_THROW(fit_fpca(Eigen::MatrixXd::Ones(1, 11), grid), DataError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(4, 11);
  bad(2, 3) = std::nan("");
  EXPECT_THROW(fit_fpca(bad, grid), DataError);
  EXPECT_THROW(fit_fpca(Eigen::MatrixXd::Ones(4, 12), grid), ShapeError);
}

TEST(Project, MeanGivesZeroAndEigenfunctionGivesUnit) {
  const auto grid = sim::WavelengthGrid::uniform(51);
  const auto basis = fit_fpca(random_curves(grid, 100, 4, 0.01), grid);
  EXPECT_LE(project(basis, basis.mean, 10).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd s = project(basis, basis.mean + basis.eigenfunctions.row(0).transpose(), 10);
  EXPECT_NEAR(s[0], 1.0, 1e-8);
  EXPECT_LE(s.tail(9).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Project, RangeErrorBeyondKmax) {
  const auto grid = sim::WavelengthGrid::uniform(11);
  const auto basis = fit_fpca(random_curves(grid, 5, 4), grid);
  EXPECT_EQ(basis.max_components(), 5u);
  EXPECT_THROW(project(basis, basis.mean, 6), RangeError);
  EXPECT_THROW(explained_variance(basis, 6), RangeError);
}

TEST(Project, IsAffineInTheDocumentedSense) {
  const auto grid = sim::WavelengthGrid::uniform(51);
  const auto x = random_curves(grid, 60, 5, 0.01);
  const auto basis = fit_fpca(x, grid);
  const Eigen::VectorXd s1 = x.row(1).transpose(), s2 = x.row(2).transpose();
  const double a = 0.7, b = -1.3;
  const Eigen::VectorXd combo = a * s1 + b * s2 - (a + b - 1.0) * basis.mean;
  const Eigen::VectorXd lhs = project(basis, combo, 20);
  const Eigen::VectorXd rhs = a * project(basis, s1, 20) + b * project(basis, s2, 20);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Project, RowsMatchesSingle) {
  const auto grid = sim::WavelengthGrid::uniform(31);
  const auto x = random_curves(grid, 40, 6, 0.01);
  const auto basis = fit_fpca(x, grid);
  const Eigen::MatrixXd all = project_rows(basis, x, 7);
  for (int i = 0; i < 40; ++i) {
    EXPECT_LE((all.row(i).transpose() - project(basis, x.row(i).transpose(), 7)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// Mean weighted squared reconstruction error over the training rows equals
// (n-1)/n times the sum of the discarded eigenvalues (every eigenvalue is
// stored when n > B).
TEST(Reconstruct, ErrorMatchesDiscardedEigenvalues) {
  const auto grid = sim::WavelengthGrid::uniform(21);
  const int n = 60;
  const auto x = random_curves(grid, n, 12, 0.05);
  const auto basis = fit_fpca(x, grid);
  ASSERT_EQ(basis.max_components(), 21u);
  for (std::size_t k : {1u, 3u, 8u}) {
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd row = x.row(i).transpose();
      const Eigen::VectorXd diff = row - reconstruct(basis, project(basis, row, k));
      err += weighted_dot(diff, diff, basis.quad_weights);
    }
    err /= n;
    const double tail = basis.eigenvalues.tail(basis.eigenvalues.size() - static_cast<Eigen::Index>(k)).sum();
    EXPECT_NEAR(err, tail * (n - 1) / n, 1e-10 * basis.eigenvalues.sum()) << k;
  }
}

TEST(ExplainedVariance, TotalityAndMonotone) {
  const auto grid = sim::WavelengthGrid::uniform(31);
  const auto basis = fit_fpca(random_curves(grid, 20, 2, 0.05), grid);
  EXPECT_DOUBLE_EQ(explained_variance(basis, basis.max_components()), 1.0);
  double prev = 0.0;
  for (std::size_t k = 0; k <= basis.max_components(); ++k) {
    const double v = explained_variance(basis, k);
    EXPECT_GE(v, prev - 1e-15);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
  EXPECT_LE(explained_total_variance(basis, 5), explained_variance(basis, 5) + 1e-15);
}

TEST(BasisFile, RoundTrip) {
  const auto grid = sim::WavelengthGrid::uniform(31);
  const auto basis = fit_fpca(random_curves(grid, 30, 2, 0.05), grid);
  test::TempDir dir;
  write_basis(dir.path() / "b.fpca", basis);
  const auto back = read_basis(dir.path() / "b.fpca");
  EXPECT_EQ(back.mean, basis.mean);
  EXPECT_EQ(back.eigenfunctions, basis.eigenfunctions);
  EXPECT_EQ(back.eigenvalues, basis.eigenvalues);
  EXPECT_EQ(back.quad_weights, basis.quad_weights);
  EXPECT_EQ(back.grid.lambda, basis.grid.lambda);
  EXPECT_DOUBLE_EQ(back.total_variance, basis.total_variance);
}

TEST(PixelRef, IdRoundTrip) {
  const PixelRef p{"MLS-1200", 12, 40};
  EXPECT_EQ(p.id(), "r12c40");
  EXPECT_EQ(PixelRef::parse("MLS-1200", "r12c40"), p);
  EXPECT_THROW(PixelRef::parse("MLS-1200", "12-40"), IoError);
}

TEST(Features, LabelsFollowAbundanceAndCsvRoundTrips) {
  const auto grid = sim::WavelengthGrid::uniform(21);
  sim::SceneConfig c;
  c.height = c.width = 16;
  c.n_discs = 6;
  c.seed = 2;
  std::vector<sim::Endmember> lib(2);
  lib[0] = {"bg", std::vector<double>(21, 0.3), false};
  lib[1] = {"t", std::vector<double>(21, 0.6), true};
  const auto cube = sim::generate_scene(c, grid, lib);
  std::vector<PixelRef> pixels;
  for (int r = 0; r < 16; ++r) {
    for (int col = 0; col < 16; ++col) pixels.push_back({"MLS-1200", r, col});
  }
  const auto basis = fit_fpca(gather_spectra(cube, pixels), grid);
  const auto fm = featurize(basis, cube, pixels, 5);
  fm.validate();
  ASSERT_EQ(fm.size(), 256u);
  for (std::size_t i = 0; i < fm.size(); ++i) EXPECT_EQ(fm.labels[i], fm.abundance[i] > 0.0 ? 1 : 0);

  test::TempDir dir;
  write_features_csv(dir.path() / "f.csv", fm);
  const auto back = read_features_csv(dir.path() / "f.csv");
  EXPECT_EQ(back.labels, fm.labels);
  EXPECT_EQ(back.pixels, fm.pixels);
  EXPECT_LE((back.scores - fm.scores).cwiseAbs().maxCoeff(), 1e-15);
}
