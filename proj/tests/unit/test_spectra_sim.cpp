#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "hsbnn/error.hpp"
#include "hsbnn/spectra_sim.hpp"
#include "test_util.hpp"

using namespace hsbnn;
using namespace hsbnn::sim;

namespace {

// Brute-force coverage: test every point of an m x m lattice against the
// circle equation directly, without the library's bounding-box shortcut.
double lattice_coverage(double cx, double cy, double r, int row, int col, int m) {
  int hits = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double px = col + (j + 0.5) / m;
      const double py = row + (i + 0.5) / m;
      if ((px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r) ++hits;
    }
  }
  return static_cast<double>(hits) / (m * m);
}

std::vector<Endmember> two_material_library(const WavelengthGrid& grid) {
  std::vector<Endmember> lib(2);
  lib[0].name = "flat";
  lib[1].name = "target";
  lib[1].is_target = true;
  for (std::size_t b = 0; b < grid.size(); ++b) {
    lib[0].reflectance.push_back(0.3);
    lib[1].reflectance.push_back(0.1 + 0.5 * b / static_cast<double>(grid.size()));
  }
  return lib;
}

}  // namespace

TEST(WavelengthGrid, DefaultSpans211Bands) {
  const auto g = WavelengthGrid::uniform();
  ASSERT_EQ(g.size(), 211u);
  EXPECT_DOUBLE_EQ(g.lambda.front(), 0.4);
  EXPECT_NEAR(g.lambda.back(), 2.5, 1e-12);
  for (std::size_t b = 1; b < g.size(); ++b) EXPECT_GT(g.lambda[b], g.lambda[b - 1]);
}

TEST(WavelengthGrid, RejectsNonIncreasing) {
  WavelengthGrid g{{0.4, 0.5, 0.5}};
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Endmembers, LibraryIsBoundedSmoothAndConfusable) {
  const auto grid = WavelengthGrid::uniform();
  const auto lib = default_endmembers(grid);
  ASSERT_EQ(lib.size(), 6u);
  const Endmember* target = nullptr;
  int targets = 0;
  for (const auto& e : lib) {
    ASSERT_EQ(e.reflectance.size(), grid.size());
    for (double v : e.reflectance) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(max_second_difference(e.reflectance), SceneConfig{}.smoothness_cap) << e.name;
    if (e.is_target) {
      target = &e;
      ++targets;
    }
  }
  ASSERT_EQ(targets, 1);
  for (const auto& e : lib) {
    if (e.name == "grass" || e.name == "tree") {
      EXPECT_GE(cosine_similarity(e.reflectance, target->reflectance), 0.9) << e.name;
    }
  }
}

TEST(DiscAbundance, FullyContainedPixelIsOne) {
  EXPECT_DOUBLE_EQ(disc_abundance(10.5, 10.5, 3.0, 10, 10), 1.0);
}

TEST(DiscAbundance, HalfMetreDiscAtCentre) {
  const double a = disc_abundance(10.5, 10.5, 0.5, 10, 10);
  EXPECT_NEAR(a, std::numbers::pi * 0.25, 2.0 / 32);
}

TEST(DiscAbundance, TinyDiscAtCentre) {
  const double a = disc_abundance(10.5, 10.5, 0.1, 10, 10);
  EXPECT_NEAR(a, std::numbers::pi * 0.01, 2.0 / 32);
}

TEST(DiscAbundance, OutOfRangePixelIsZero) {
  EXPECT_DOUBLE_EQ(disc_abundance(2.0, 2.0, 1.0, 40, 40), 0.0);
  EXPECT_DOUBLE_EQ(disc_abundance(2.0, 2.0, 1.0, -5, 2), 0.0);
}

TEST(DiscAbundance, NonPositiveRadiusIsRejected) {
  EXPECT_THROW(disc_abundance(2.0, 2.0, 0.0, 2, 2), ConfigError);
}

TEST(DiscAbundance, SupersamplingConverges) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0.0, 3.0), rad(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double cx = pos(rng), cy = pos(rng), r = rad(rng);
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) {
        const double a16 = disc_abundance(cx, cy, r, row, col, 16);
        const double a32 = disc_abundance(cx, cy, r, row, col, 32);
        EXPECT_LE(std::abs(a16 - a32), 2.0 / 16);
      }
    }
  }
}

TEST(DiscAbundance, MatchesLatticeOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.0, 4.0), rad(0.1, 2.5);
  for (int trial = 0; trial < 50; ++trial) {
    const double cx = pos(rng), cy = pos(rng), r = rad(rng);
    for (int row = 0; row < 4; ++row) {
      for (int col = 0; col < 4; ++col) {
        EXPECT_DOUBLE_EQ(disc_abundance(cx, cy, r, row, col, 32), lattice_coverage(cx, cy, r, row, col, 32));
      }
    }
  }
}

TEST(Atmosphere, ZeroSpectrumGivesOffsetAlone) {
  const auto grid = WavelengthGrid::uniform();
  std::vector<double> zeros(grid.size(), 0.0);
  apply_atmosphere(zeros, grid, Atmosphere::MLS, TimeOfDay::T1200);
  const auto tr = atmosphere_transform(grid, Atmosphere::MLS, TimeOfDay::T1200);
  for (std::size_t b = 0; b < grid.size(); ++b) EXPECT_DOUBLE_EQ(zeros[b], tr.offset[static_cast<Eigen::Index>(b)]);
}

TEST(Atmosphere, NotIdempotent) {
  const auto grid = WavelengthGrid::uniform();
  std::vector<double> once(grid.size(), 0.4);
  apply_atmosphere(once, grid, Atmosphere::SAS, TimeOfDay::T1430);
  auto twice = once;
  apply_atmosphere(twice, grid, Atmosphere::SAS, TimeOfDay::T1430);
  double diff = 0.0;
  for (std::size_t b = 0; b < grid.size(); ++b) diff += std::abs(twice[b] - once[b]);
  EXPECT_GT(diff, 1e-3);
}

TEST(Atmosphere, GainsBoundedAndTransformsDistinct) {
  const auto grid = WavelengthGrid::uniform();
  std::vector<AtmosphereTransform> all;
  for (auto a : kAtmospheres) {
    for (auto t : kTimes) {
      auto tr = atmosphere_transform(grid, a, t);
      EXPECT_GE(tr.gain.minCoeff(), 0.5);
      EXPECT_LE(tr.gain.maxCoeff(), 1.2);
      all.push_back(std::move(tr));
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      EXPECT_GT((all[i].gain - all[j].gain).norm() + (all[i].offset - all[j].offset).norm(), 1e-3);
    }
  }
}

// Oracle: the documented gain/offset tables evaluated directly.
TEST(Atmosphere, BandMeanShiftMatchesDocumentedTables) {
  const auto grid = WavelengthGrid::uniform();
  auto documented = [&](double d, double h, double s) {
    double total = 0.0;
    for (double l : grid.lambda) {
      auto g = [&](double c, double w) { return std::exp(-0.5 * std::pow((l - c) / w, 2)); };
      const double water = 0.6 * g(0.94, 0.025) + 0.7 * g(1.14, 0.03) + g(1.38, 0.05) + g(1.87, 0.06);
      double gain = s * (1.05 - d * water - 0.1 * h * std::exp(-(l - 0.4) / 0.15));
      gain = std::min(1.2, std::max(0.5, gain));
      total += gain * 0.5 + 0.02 * h * (2.0 - s) * std::exp(-(l - 0.4) / 0.25);
    }
    return total / static_cast<double>(grid.size());
  };
  const double mls = documented(0.25, 1.0, 1.00);
  const double trop = documented(0.35, 1.3, 0.84);

  std::vector<double> a(grid.size(), 0.5), b(grid.size(), 0.5);
  apply_atmosphere(a, grid, Atmosphere::MLS, TimeOfDay::T1200);
  apply_atmosphere(b, grid, Atmosphere::TROP, TimeOfDay::T1545);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= grid.size();
  mb /= grid.size();
  EXPECT_NEAR((mb - ma) / ma, (trop - mls) / mls, 1e-12);
}

TEST(SceneNames, ParseRoundTrip) {
  for (auto a : kAtmospheres) {
    for (auto t : kTimes) {
      EXPECT_EQ(parse_atmosphere(to_string(a)), a);
      EXPECT_EQ(parse_time(to_string(t)), t);
    }
  }
  EXPECT_EQ(scene_name(Atmosphere::TROP, TimeOfDay::T1545), "TROP-1545");
  EXPECT_THROW(parse_atmosphere("ARCTIC"), ConfigError);
}

TEST(GenerateScene, NoDiscsMeansNoTarget) {
  const auto grid = WavelengthGrid::uniform();
  SceneConfig c;
  c.height = 16;
  c.width = 16;
  c.n_discs = 0;
  const auto cube = generate_scene(c, grid, default_endmembers(grid));
  for (float a : cube.abundance) EXPECT_EQ(a, 0.0f);
}

TEST(GenerateScene, DeterministicForSeed) {
  const auto grid = WavelengthGrid::uniform();
  SceneConfig c;
  c.height = 16;
  c.width = 16;
  c.seed = 99;
  const auto lib = default_endmembers(grid);
  const auto a = generate_scene(c, grid, lib);
  const auto b = generate_scene(c, grid, lib);
  EXPECT_EQ(a.spectra, b.spectra);
  EXPECT_EQ(a.abundance, b.abundance);
  c.seed = 100;
  EXPECT_NE(generate_scene(c, grid, lib).spectra, a.spectra);
}

TEST(GenerateScene, PositiveCountMatchesRasterOracle) {
  const auto grid = WavelengthGrid::uniform(21);
  SceneConfig c;
  c.n_discs = 30;
  c.seed = 5;
  const auto cube = generate_scene(c, grid, two_material_library(grid));
  int expected = 0;
  for (int r = 0; r < c.height; ++r) {
    for (int col = 0; col < c.width; ++col) {
      bool any = false;
      for (const auto& d : cube.discs) any = any || lattice_coverage(d.x, d.y, d.radius, r, col, c.supersample) > 0.0;
      expected += any ? 1 : 0;
    }
  }
  int got = 0;
  for (float a : cube.abundance) got += a > 0.0f ? 1 : 0;
  EXPECT_EQ(got, expected);
  EXPECT_GT(got, 0);
}

TEST(GenerateScene, AbundanceConservedBeforeNoise) {
  // one background material: un-applying the transform recovers a*t + (1-a)*bg
  const auto grid = WavelengthGrid::uniform(31);
  const auto lib = two_material_library(grid);
  SceneConfig c;
  c.height = 24;
  c.width = 24;
  c.noise_sd = 0.0;
  c.n_discs = 10;
  c.seed = 3;
  const auto cube = generate_scene(c, grid, lib);
  const auto tr = atmosphere_transform(grid, c.atmosphere, c.time);
  for (int r = 0; r < c.height; ++r) {
    for (int col = 0; col < c.width; ++col) {
      const double a = cube.abundance_at(r, col);
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
      const auto px = cube.pixel(r, col);
      for (std::size_t b = 0; b < grid.size(); ++b) {
        const auto bi = static_cast<Eigen::Index>(b);
        const double mix = (px[b] - tr.offset[bi]) / tr.gain[bi];
        EXPECT_NEAR(mix, a * lib[1].reflectance[b] + (1.0 - a) * lib[0].reflectance[b], 1e-5);
      }
    }
  }
}

TEST(GenerateScene, OcclusionReducesCoveredArea) {
  const auto grid = WavelengthGrid::uniform(11);
  SceneConfig c;
  c.n_discs = 25;
  c.seed = 8;
  const auto lib = two_material_library(grid);
  const auto open = generate_scene(c, grid, lib);
  c.occlusion_fraction = 0.4;
  const auto hidden = generate_scene(c, grid, lib);
  double a = 0.0, b = 0.0;
  for (float v : open.abundance) a += v;
  for (float v : hidden.abundance) b += v;
  EXPECT_LT(b, a);
  EXPECT_NEAR(b / a, 0.6, 0.1);
}

TEST(GenerateScene, RequiresExactlyOneTarget) {
  const auto grid = WavelengthGrid::uniform(11);
  SceneConfig c;
  c.height = c.width = 8;
  auto lib = two_material_library(grid);
  lib[1].is_target = false;
  EXPECT_THROW(generate_scene(c, grid, lib), ConfigError);
  lib[0].is_target = lib[1].is_target = true;
  EXPECT_THROW(generate_scene(c, grid, lib), ConfigError);
}

TEST(GenerateScene, RadiusOutsideRangeRejected) {
  const auto grid = WavelengthGrid::uniform(11);
  SceneConfig c;
  c.height = c.width = 8;
  std::vector<Disc> discs{{4.0, 4.0, 5.0, 0.0, 0.0}};
  EXPECT_THROW(generate_scene(c, grid, two_material_library(grid), discs), ConfigError);
}

TEST(SceneFile, RoundTrip) {
  const auto grid = WavelengthGrid::uniform(17);
  SceneConfig c;
  c.height = 12;
  c.width = 10;
  c.seed = 4;
  c.atmosphere = Atmosphere::SAS;
  c.time = TimeOfDay::T1545;
  const auto cube = generate_scene(c, grid, two_material_library(grid));
  test::TempDir dir;
  write_scene(dir.path() / "s.hsc", cube);
  const auto back = read_scene(dir.path() / "s.hsc");
  EXPECT_EQ(back.spectra, cube.spectra);
  EXPECT_EQ(back.abundance, cube.abundance);
  EXPECT_EQ(back.grid.lambda, cube.grid.lambda);
  EXPECT_EQ(back.config.name(), "SAS-1545");
  EXPECT_EQ(back.discs.size(), cube.discs.size());
  EXPECT_THROW(read_scene(dir.path() / "missing.hsc"), IoError);
}

TEST(EndmemberCsv, RoundTrip) {
  const auto grid = WavelengthGrid::uniform();
  const auto lib = default_endmembers(grid);
  test::TempDir dir;
  write_endmembers_csv(dir.path() / "lib.csv", lib);
  const auto back = read_endmembers_csv(dir.path() / "lib.csv");
  ASSERT_EQ(back.size(), lib.size());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    EXPECT_EQ(back[i].name, lib[i].name);
    EXPECT_EQ(back[i].is_target, lib[i].is_target);
    for (std::size_t b = 0; b < grid.size(); ++b) EXPECT_NEAR(back[i].reflectance[b], lib[i].reflectance[b], 1e-15);
  }
}
