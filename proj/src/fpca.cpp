#include "hsbnn/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hsbnn/container.hpp"
#include "hsbnn/error.hpp"

namespace hsbnn::fpca {

Eigen::VectorXd trapezoid_weights(const sim::WavelengthGrid& grid) {
  grid.validate();
  const auto nb = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd w(nb);
  const auto& l = grid.lambda;
  w[0] = 0.5 * (l[1] - l[0]);
  w[nb - 1] = 0.5 * (l[nb - 1] - l[nb - 2]);
  for (Eigen::Index b = 1; b + 1 < nb; ++b) w[b] = 0.5 * (l[b + 1] - l[b - 1]);
  return w;
}

FpcaBasis fit_fpca(const Eigen::MatrixXd& spectra, const sim::WavelengthGrid& grid) {
  const auto n = spectra.rows();
  if (n < 2) throw DataError("fit_fpca needs at least 2 spectra, got " + std::to_string(n));
  if (static_cast<std::size_t>(spectra.cols()) != grid.size()) {
    throw ShapeError("spectra have " + std::to_string(spectra.cols()) + " bands, grid has " +
                     std::to_string(grid.size()));
  }
  if (!spectra.allFinite()) throw DataError("fit_fpca: non-finite spectral values");

  FpcaBasis basis;
  basis.grid = grid;
  basis.n_fit = static_cast<std::size_t>(n);
  basis.quad_weights = trapezoid_weights(grid);
  basis.mean = spectra.colwise().mean().transpose();

  const Eigen::MatrixXd centred = spectra.rowwise() - basis.mean.transpose();
  const Eigen::VectorXd root_w = basis.quad_weights.cwiseSqrt();
  // symmetric form  W^1/2 C W^1/2
  const Eigen::MatrixXd scaled = centred * root_w.asDiagonal();
  const Eigen::MatrixXd sym = (scaled.transpose() * scaled) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("fit_fpca: eigendecomposition failed");

  const auto bands = spectra.cols();
  const auto kmax = static_cast<Eigen::Index>(
      std::min<std::size_t>({static_cast<std::size_t>(n), static_cast<std::size_t>(bands), kMaxComponents}));
  basis.eigenvalues.resize(kmax);
  basis.eigenfunctions.resize(kmax, bands);
  for (Eigen::Index k = 0; k < kmax; ++k) {
    const Eigen::Index src = bands - 1 - k;  // solver sorts ascending
    basis.eigenvalues[k] = std::max(0.0, solver.eigenvalues()[src]);
    Eigen::VectorXd phi = solver.eigenvectors().col(src).cwiseQuotient(root_w);
    Eigen::Index arg = 0;
    phi.cwiseAbs().maxCoeff(&arg);
    if (phi[arg] < 0.0) phi = -phi;
    basis.eigenfunctions.row(k) = phi.transpose();
  }
  basis.total_variance = std::max(0.0, sym.trace());
  return basis;
}

namespace {

void check_k(const FpcaBasis& basis, std::size_t k) {
  if (k > basis.max_components()) {
    throw RangeError("requested " + std::to_string(k) + " components, basis holds " +
                     std::to_string(basis.max_components()));
  }
}

}  // namespace

Eigen::VectorXd project(const FpcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& spectrum,
                        std::size_t k) {
  check_k(basis, k);
  if (spectrum.size() != basis.mean.size()) throw ShapeError("project: spectrum length mismatch");
  const Eigen::VectorXd weighted = (spectrum - basis.mean).cwiseProduct(basis.quad_weights);
  return basis.eigenfunctions.topRows(static_cast<Eigen::Index>(k)) * weighted;
}

Eigen::MatrixXd project_rows(const FpcaBasis& basis, const Eigen::MatrixXd& spectra, std::size_t k) {
  check_k(basis, k);
  if (spectra.cols() != basis.mean.size()) throw ShapeError("project_rows: band count mismatch");
  const Eigen::MatrixXd weighted =
      (spectra.rowwise() - basis.mean.transpose()) * basis.quad_weights.asDiagonal();
  return weighted * basis.eigenfunctions.topRows(static_cast<Eigen::Index>(k)).transpose();
}

Eigen::VectorXd reconstruct(const FpcaBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& scores) {
  check_k(basis, static_cast<std::size_t>(scores.size()));
  return basis.mean + basis.eigenfunctions.topRows(scores.size()).transpose() * scores;
}

double explained_variance(const FpcaBasis& basis, std::size_t k) {
  check_k(basis, k);
  const double all = basis.eigenvalues.sum();
  if (!(all > 0.0)) return 1.0;
  const double head = basis.eigenvalues.head(static_cast<Eigen::Index>(k)).sum();
  return std::clamp(head / all, 0.0, 1.0);
}

double explained_total_variance(const FpcaBasis& basis, std::size_t k) {
  check_k(basis, k);
  if (!(basis.total_variance > 0.0)) return 1.0;
  const double head = basis.eigenvalues.head(static_cast<Eigen::Index>(k)).sum();
  return std::clamp(head / basis.total_variance, 0.0, 1.0);
}

void write_basis(const std::filesystem::path& path, const FpcaBasis& basis) {
  json header{{"format", "fpca"},
              {"version", 1},
              {"bands", basis.bands()},
              {"k_max", basis.max_components()},
              {"n_fit", basis.n_fit},
              {"total_variance", basis.total_variance},
              {"wavelengths", basis.grid.lambda},
              {"dtype", "float64"},
              {"byte_order", "little"},
              {"layout", "mean[B], quad_weights[B], eigenvalues[K], eigenfunctions[K][B]"}};
  std::vector<std::byte> payload;
  append_payload(payload, std::span<const double>(basis.mean.data(), basis.mean.size()));
  append_payload(payload, std::span<const double>(basis.quad_weights.data(), basis.quad_weights.size()));
  append_payload(payload, std::span<const double>(basis.eigenvalues.data(), basis.eigenvalues.size()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = basis.eigenfunctions;
  append_payload(payload, std::span<const double>(rows.data(), rows.size()));
  write_container(path, std::move(header), payload);
}

FpcaBasis read_basis(const std::filesystem::path& path) {
  auto c = read_container(path);
  if (c.header.value("format", "") != "fpca") throw IoError(path.string() + " is not an fpca basis");
  FpcaBasis basis;
  std::size_t bands = 0, kmax = 0;
  try {
    bands = c.header.at("bands").get<std::size_t>();
    kmax = c.header.at("k_max").get<std::size_t>();
    basis.n_fit = c.header.at("n_fit").get<std::size_t>();
    basis.total_variance = c.header.at("total_variance").get<double>();
    basis.grid.lambda = c.header.at("wavelengths").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad fpca header: " + e.what());
  }
  const auto b = static_cast<Eigen::Index>(bands);
  const auto k = static_cast<Eigen::Index>(kmax);
  PayloadReader reader(c.payload);
  basis.mean.resize(b);
  reader.read(std::span<double>(basis.mean.data(), bands));
  basis.quad_weights.resize(b);
  reader.read(std::span<double>(basis.quad_weights.data(), bands));
  basis.eigenvalues.resize(k);
  reader.read(std::span<double>(basis.eigenvalues.data(), kmax));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(k, b);
  reader.read(std::span<double>(rows.data(), kmax * bands));
  basis.eigenfunctions = rows;
  if (!reader.exhausted()) throw IoError(path.string() + ": trailing payload bytes");
  return basis;
}

std::string PixelRef::id() const {
  return "r" + std::to_string(row) + "c" + std::to_string(col);
}

PixelRef PixelRef::parse(const std::string& scene, const std::string& id) {
  const auto c = id.find('c');
  if (id.empty() || id[0] != 'r' || c == std::string::npos) {
    throw IoError("malformed pixel id '" + id + "'");
  }
  try {
    return PixelRef{scene, std::stoi(id.substr(1, c - 1)), std::stoi(id.substr(c + 1))};
  } catch (const std::exception&) {
    throw IoError("malformed pixel id '" + id + "'");
  }
}

void FeatureMatrix::validate() const {
  const auto n = labels.size();
  if (static_cast<std::size_t>(scores.rows()) != n || abundance.size() != n || pixels.size() != n) {
    throw ShapeError("feature matrix columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != (abundance[i] > 0.0 ? 1 : 0)) {
      throw DataError("label/abundance mismatch at pixel " + pixels[i].id());
    }
  }
}

Eigen::MatrixXd gather_spectra(const sim::SceneCube& scene, const std::vector<PixelRef>& pixels) {
  const auto nb = static_cast<Eigen::Index>(scene.bands());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pixels.size()), nb);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto& p = pixels[i];
    if (p.row < 0 || p.row >= scene.height() || p.col < 0 || p.col >= scene.width()) {
      throw RangeError("pixel " + p.id() + " outside scene " + scene.config.name());
    }
    const auto px = scene.pixel(p.row, p.col);
    for (Eigen::Index b = 0; b < nb; ++b) out(static_cast<Eigen::Index>(i), b) = px[static_cast<std::size_t>(b)];
  }
  return out;
}

FeatureMatrix featurize(const FpcaBasis& basis, const sim::SceneCube& scene,
                        const std::vector<PixelRef>& pixels, std::size_t k) {
  FeatureMatrix fm;
  fm.scores = project_rows(basis, gather_spectra(scene, pixels), k);
  fm.pixels = pixels;
  fm.labels.reserve(pixels.size());
  fm.abundance.reserve(pixels.size());
  for (const auto& p : pixels) {
    const double a = scene.abundance_at(p.row, p.col);
    fm.abundance.push_back(a);
    fm.labels.push_back(a > 0.0 ? 1 : 0);
  }
  return fm;
}

void write_features_csv(const std::filesystem::path& path, const FeatureMatrix& fm) {
  fm.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "pixel_id,scene,abundance,label";
  for (std::size_t k = 0; k < fm.dim(); ++k) out << ",pc_" << (k + 1);
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < fm.size(); ++i) {
    out << fm.pixels[i].id() << ',' << fm.pixels[i].scene << ',' << fm.abundance[i] << ','
        << fm.labels[i];
    for (Eigen::Index k = 0; k < fm.scores.cols(); ++k) out << ',' << fm.scores(static_cast<Eigen::Index>(i), k);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

FeatureMatrix read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("pixel_id,scene,abundance,label", 0) != 0) {
    throw IoError(path.string() + ": missing feature CSV header");
  }
  const auto k = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 3;
  std::vector<std::vector<double>> rows;
  FeatureMatrix fm;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, scene, cell;
    std::getline(ss, id, ',');
    std::getline(ss, scene, ',');
    fm.pixels.push_back(PixelRef::parse(scene, id));
    try {
      std::getline(ss, cell, ',');
      fm.abundance.push_back(std::stod(cell));
      std::getline(ss, cell, ',');
      fm.labels.push_back(std::stoi(cell));
      std::vector<double> r;
      r.reserve(k);
      while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
      if (r.size() != k) throw IoError(path.string() + ": ragged row for pixel " + id);
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw IoError(path.string() + ": non-numeric cell in row for pixel " + id);
    }
  }
  fm.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) fm.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  fm.validate();
  return fm;
}

}  // namespace hsbnn::fpca
