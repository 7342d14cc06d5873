#pragma once

// Synthetic hyperspectral scenes with known sub-pixel target abundance.
//
// Each pixel is a linear mixture of endmember reflectances, passed through a
// smooth atmosphere/time-of-day transform and corrupted by i.i.d. Gaussian
// noise. Targets are discs rasterized by supersampling; a random angular
// sector of each disc may be hidden (treated as background).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hsbnn::sim {

struct WavelengthGrid {
  std::vector<double> lambda;  // µm, strictly increasing

  std::size_t size() const noexcept { return lambda.size(); }
  void validate() const;

  /// `bands` equally spaced wavelengths on [lo, hi]; defaults give 211 bands
  /// on 0.4-2.5 µm.
  static WavelengthGrid uniform(std::size_t bands = 211, double lo = 0.4, double hi = 2.5);
};

struct Endmember {
  std::string name;
  std::vector<double> reflectance;  // one value per band, in [0, 1]
  bool is_target = false;
};

/// Six smooth synthetic materials: grass, tree, soil, asphalt, roof and a
/// green-paint target. Grass and tree are deliberately close to the target
/// (cosine similarity >= 0.9).
std::vector<Endmember> default_endmembers(const WavelengthGrid& grid);

/// Largest absolute second difference of a curve.
double max_second_difference(std::span<const double> curve);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class Atmosphere { MLS, SAS, TROP };
enum class TimeOfDay { T1200, T1430, T1545 };

inline constexpr Atmosphere kAtmospheres[] = {Atmosphere::MLS, Atmosphere::SAS,
                                              Atmosphere::TROP};
inline constexpr TimeOfDay kTimes[] = {TimeOfDay::T1200, TimeOfDay::T1430, TimeOfDay::T1545};

std::string_view to_string(Atmosphere a);
std::string_view to_string(TimeOfDay t);
Atmosphere parse_atmosphere(std::string_view s);
TimeOfDay parse_time(std::string_view s);

/// "MLS-1200" style identifier.
std::string scene_name(Atmosphere a, TimeOfDay t);

struct SceneConfig {
  int height = 64;
  int width = 64;
  Atmosphere atmosphere = Atmosphere::MLS;
  TimeOfDay time = TimeOfDay::T1200;
  int n_discs = 20;
  double radius_min = 0.1;  // m
  double radius_max = 4.0;  // m
  double occlusion_fraction = 0.0;
  double noise_sd = 0.0003;
  std::uint64_t seed = 0;
  int supersample = 32;
  double smoothness_cap = 0.05;     // bound on endmember second differences
  double background_concentration = 0.5;  // symmetric Dirichlet parameter

  void validate() const;
  std::string name() const { return scene_name(atmosphere, time); }
};

/// A target disc in scene coordinates (x = column direction, y = row
/// direction, metres; one pixel is 1 m x 1 m). The angular sector
/// [occlusion_start, occlusion_start + 2*pi*occluded_fraction) is hidden.
struct Disc {
  double x = 0.0;
  double y = 0.0;
  double radius = 1.0;
  double occlusion_start = 0.0;
  double occluded_fraction = 0.0;

  bool covers(double px, double py) const noexcept;
};

struct SceneCube {
  SceneConfig config;
  WavelengthGrid grid;
  std::vector<std::string> endmember_names;
  std::vector<Disc> discs;
  std::vector<float> spectra;    // height * width * bands, pixel-major
  std::vector<float> abundance;  // height * width

  int height() const noexcept { return config.height; }
  int width() const noexcept { return config.width; }
  std::size_t bands() const noexcept { return grid.size(); }
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(config.width) +
           static_cast<std::size_t>(col);
  }
  std::span<const float> pixel(int row, int col) const {
    return {spectra.data() + index(row, col) * bands(), bands()};
  }
  float abundance_at(int row, int col) const { return abundance[index(row, col)]; }
};

/// Fraction of pixel (row, col) covered by the visible part of `disc`,
/// estimated on an n x n grid of sub-pixel centres.
double disc_abundance(const Disc& disc, int row, int col, int n = 32);

/// Convenience overload for an unoccluded disc.
double disc_abundance(double center_x, double center_y, double radius, int row, int col,
                      int n = 32);

/// Abundance raster for a set of discs; overlapping discs cover a sub-sample
/// once.
std::vector<float> rasterize_discs(std::span<const Disc> discs, int height, int width, int n);

/// Per-band gain and additive path-radiance offset for one (atmosphere, time)
/// condition. Gains lie in [0.5, 1.2].
struct AtmosphereTransform {
  Eigen::VectorXd gain;
  Eigen::VectorXd offset;

  void apply(std::span<double> spectrum) const;
};

AtmosphereTransform atmosphere_transform(const WavelengthGrid& grid, Atmosphere a, TimeOfDay t);

/// Applies the (a, t) transform in place to a pixel-major block of spectra.
void apply_atmosphere(std::span<double> spectra, const WavelengthGrid& grid, Atmosphere a,
                      TimeOfDay t);

/// Draws disc geometry from the configured seed.
std::vector<Disc> draw_discs(const SceneConfig& config);

SceneCube generate_scene(const SceneConfig& config, const WavelengthGrid& grid,
                         const std::vector<Endmember>& endmembers);

/// As above with explicit disc placement; every radius must lie inside the
/// configured radius range.
SceneCube generate_scene(const SceneConfig& config, const WavelengthGrid& grid,
                         const std::vector<Endmember>& endmembers, std::vector<Disc> discs);

// .hsc scene container
void write_scene(const std::filesystem::path& path, const SceneCube& scene);
SceneCube read_scene(const std::filesystem::path& path);

// Endmember library CSV: name,is_target,r_0,...,r_{B-1}
void write_endmembers_csv(const std::filesystem::path& path, const std::vector<Endmember>& lib);
std::vector<Endmember> read_endmembers_csv(const std::filesystem::path& path);

}  // namespace hsbnn::sim
