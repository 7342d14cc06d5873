#include "hsbnn/spectra_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hsbnn/container.hpp"
#include "hsbnn/error.hpp"
#include "hsbnn/random.hpp"

namespace hsbnn::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Bump {
  double center;
  double width;
  double amplitude;
};

double gaussian(double x, double c, double w) {
  const double z = (x - c) / w;
  return std::exp(-0.5 * z * z);
}

std::vector<double> bump_curve(const WavelengthGrid& grid, double base,
                               std::initializer_list<Bump> bumps) {
  std::vector<double> r(grid.size());
  for (std::size_t b = 0; b < grid.size(); ++b) {
    double v = base;
    for (const auto& k : bumps) v += k.amplitude * gaussian(grid.lambda[b], k.center, k.width);
    r[b] = std::clamp(v, 0.0, 1.0);
  }
  return r;
}

struct AtmosphereParams {
  double water_depth;
  double haze;
};

AtmosphereParams params_for(Atmosphere a) {
  switch (a) {
    case Atmosphere::MLS: return {0.25, 1.0};
    case Atmosphere::SAS: return {0.15, 0.8};
    case Atmosphere::TROP: return {0.35, 1.3};
  }
  return {0.25, 1.0};
}

double sun_factor(TimeOfDay t) {
  switch (t) {
    case TimeOfDay::T1200: return 1.00;
    case TimeOfDay::T1430: return 0.92;
    case TimeOfDay::T1545: return 0.84;
  }
  return 1.0;
}

void validate_library(const std::vector<Endmember>& lib, const WavelengthGrid& grid,
                      double smoothness_cap) {
  const auto targets = std::count_if(lib.begin(), lib.end(),
                                     [](const Endmember& e) { return e.is_target; });
  if (targets != 1) {
    throw ConfigError("endmember library must contain exactly one target, found " +
                      std::to_string(targets));
  }
  if (lib.size() < 2) throw ConfigError("endmember library needs at least one background material");
  for (const auto& e : lib) {
    if (e.reflectance.size() != grid.size()) {
      throw ShapeError("endmember '" + e.name + "' has " + std::to_string(e.reflectance.size()) +
                       " bands, grid has " + std::to_string(grid.size()));
    }
    for (double v : e.reflectance) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError("endmember '" + e.name + "' has reflectance outside [0,1]");
      }
    }
    if (max_second_difference(e.reflectance) > smoothness_cap) {
      throw ConfigError("endmember '" + e.name + "' exceeds the smoothness cap");
    }
  }
}

}  // namespace

void WavelengthGrid::validate() const {
  if (lambda.size() < 2) throw ConfigError("wavelength grid needs at least two bands");
  for (std::size_t i = 1; i < lambda.size(); ++i) {
    if (!(lambda[i] > lambda[i - 1])) throw ConfigError("wavelength grid must be strictly increasing");
  }
}

WavelengthGrid WavelengthGrid::uniform(std::size_t bands, double lo, double hi) {
  if (bands < 2 || !(hi > lo)) throw ConfigError("invalid uniform grid specification");
  WavelengthGrid g;
  g.lambda.resize(bands);
  for (std::size_t i = 0; i < bands; ++i) {
    g.lambda[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bands - 1);
  }
  return g;
}

std::vector<Endmember> default_endmembers(const WavelengthGrid& grid) {
  std::vector<Endmember> lib;
  lib.push_back({"grass",
                 bump_curve(grid, 0.04,
                            {{0.55, 0.04, 0.08}, {0.90, 0.18, 0.42}, {1.25, 0.15, 0.15},
                             {1.65, 0.12, 0.22}, {2.20, 0.10, 0.12}}),
                 false});
  lib.push_back({"tree",
                 bump_curve(grid, 0.03,
                            {{0.55, 0.04, 0.05}, {0.90, 0.18, 0.33}, {1.25, 0.15, 0.10},
                             {1.65, 0.12, 0.14}, {2.20, 0.10, 0.07}}),
                 false});
  lib.push_back({"soil",
                 bump_curve(grid, 0.06, {{1.90, 0.70, 0.30}, {0.90, 0.30, 0.05}, {2.20, 0.05, -0.03}}),
                 false});
  lib.push_back({"asphalt",
                 bump_curve(grid, 0.07, {{1.20, 0.60, 0.05}, {0.45, 0.10, -0.01}, {2.30, 0.10, 0.02}}),
                 false});
  lib.push_back({"roof",
                 bump_curve(grid, 0.18, {{0.65, 0.15, 0.10}, {1.60, 0.40, 0.08}, {2.20, 0.20, -0.04}}),
                 false});
  lib.push_back({"green_paint",
                 bump_curve(grid, 0.05,
                            {{0.54, 0.05, 0.14}, {0.95, 0.20, 0.30}, {1.60, 0.20, 0.20},
                             {1.73, 0.03, -0.06}, {2.15, 0.15, 0.10}, {2.30, 0.04, -0.04}}),
                 true});
  return lib;
}

double max_second_difference(std::span<const double> curve) {
  double m = 0.0;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    m = std::max(m, std::abs(curve[i + 1] - 2.0 * curve[i] + curve[i - 1]));
  }
  return m;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::string_view to_string(Atmosphere a) {
  switch (a) {
    case Atmosphere::MLS: return "MLS";
    case Atmosphere::SAS: return "SAS";
    case Atmosphere::TROP: return "TROP";
  }
  return "?";
}

std::string_view to_string(TimeOfDay t) {
  switch (t) {
    case TimeOfDay::T1200: return "1200";
    case TimeOfDay::T1430: return "1430";
    case TimeOfDay::T1545: return "1545";
  }
  return "?";
}

Atmosphere parse_atmosphere(std::string_view s) {
  for (auto a : kAtmospheres) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown atmosphere '" + std::string(s) + "' (expected MLS, SAS or TROP)");
}

TimeOfDay parse_time(std::string_view s) {
  for (auto t : kTimes) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown time '" + std::string(s) + "' (expected 1200, 1430 or 1545)");
}

std::string scene_name(Atmosphere a, TimeOfDay t) {
  return std::string(to_string(a)) + "-" + std::string(to_string(t));
}

void SceneConfig::validate() const {
  if (height < 1 || width < 2) throw ConfigError("scene must be at least 1x2 pixels");
  if (n_discs < 0) throw ConfigError("n_discs must be nonnegative");
  if (!(radius_min > 0.0) || radius_min > radius_max) {
    throw ConfigError("radius range must satisfy 0 < min <= max");
  }
  if (occlusion_fraction < 0.0 || occlusion_fraction > 1.0) {
    throw ConfigError("occlusion_fraction must lie in [0,1]");
  }
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be nonnegative");
  if (supersample < 1) throw ConfigError("supersample must be positive");
  if (!(background_concentration > 0.0)) throw ConfigError("background_concentration must be positive");
}

bool Disc::covers(double px, double py) const noexcept {
  const double dx = px - x;
  const double dy = py - y;
  if (dx * dx + dy * dy > radius * radius) return false;
  if (occluded_fraction <= 0.0) return true;
  if (occluded_fraction >= 1.0) return false;
  double angle = std::atan2(dy, dx) - occlusion_start;
  angle -= kTwoPi * std::floor(angle / kTwoPi);
  return angle >= kTwoPi * occluded_fraction;
}

double disc_abundance(const Disc& disc, int row, int col, int n) {
  if (!(disc.radius > 0.0)) throw ConfigError("disc radius must be positive");
  if (n < 1) throw ConfigError("supersampling factor must be positive");
  // quick reject on the bounding box
  if (disc.x + disc.radius < col || disc.x - disc.radius > col + 1 ||
      disc.y + disc.radius < row || disc.y - disc.radius > row + 1) {
    return 0.0;
  }
  int inside = 0;
  const double step = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const double py = row + (i + 0.5) * step;
    for (int j = 0; j < n; ++j) {
      if (disc.covers(col + (j + 0.5) * step, py)) ++inside;
    }
  }
  return static_cast<double>(inside) / (static_cast<double>(n) * n);
}

double disc_abundance(double center_x, double center_y, double radius, int row, int col, int n) {
  return disc_abundance(Disc{center_x, center_y, radius, 0.0, 0.0}, row, col, n);
}

std::vector<float> rasterize_discs(std::span<const Disc> discs, int height, int width, int n) {
  std::vector<float> out(static_cast<std::size_t>(height) * width, 0.0f);
  std::vector<std::vector<std::size_t>> touching(out.size());
  for (std::size_t d = 0; d < discs.size(); ++d) {
    const auto& disc = discs[d];
    const int r0 = std::max(0, static_cast<int>(std::floor(disc.y - disc.radius)));
    const int r1 = std::min(height - 1, static_cast<int>(std::floor(disc.y + disc.radius)));
    const int c0 = std::max(0, static_cast<int>(std::floor(disc.x - disc.radius)));
    const int c1 = std::min(width - 1, static_cast<int>(std::floor(disc.x + disc.radius)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) touching[static_cast<std::size_t>(r) * width + c].push_back(d);
    }
  }
  const double step = 1.0 / n;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto& list = touching[static_cast<std::size_t>(r) * width + c];
      if (list.empty()) continue;
      int inside = 0;
      for (int i = 0; i < n; ++i) {
        const double py = r + (i + 0.5) * step;
        for (int j = 0; j < n; ++j) {
          const double px = c + (j + 0.5) * step;
          for (auto d : list) {
            if (discs[d].covers(px, py)) {
              ++inside;
              break;
            }
          }
        }
      }
      out[static_cast<std::size_t>(r) * width + c] =
          static_cast<float>(static_cast<double>(inside) / (static_cast<double>(n) * n));
    }
  }
  return out;
}

void AtmosphereTransform::apply(std::span<double> spectrum) const {
  if (spectrum.size() != static_cast<std::size_t>(gain.size())) {
    throw ShapeError("spectrum length does not match atmosphere transform");
  }
  for (std::size_t b = 0; b < spectrum.size(); ++b) {
    spectrum[b] = gain[static_cast<Eigen::Index>(b)] * spectrum[b] +
                  offset[static_cast<Eigen::Index>(b)];
  }
}

// gain(l)   = s_t * (1.05 - d_atm * W(l) - 0.1 * h_atm * exp(-(l - 0.4) / 0.15))
// offset(l) = 0.02 * h_atm * (2 - s_t) * exp(-(l - 0.4) / 0.25)
// W(l) is a fixed water-vapour absorption profile with bands near 0.94, 1.14,
// 1.38 and 1.87 um. s_t = 1.00, 0.92, 0.84 for 1200, 1430, 1545;
// (d, h) = (0.25, 1.0) MLS, (0.15, 0.8) SAS, (0.35, 1.3) TROP.
AtmosphereTransform atmosphere_transform(const WavelengthGrid& grid, Atmosphere a, TimeOfDay t) {
  const auto p = params_for(a);
  const double s = sun_factor(t);
  AtmosphereTransform tr;
  const auto nb = static_cast<Eigen::Index>(grid.size());
  tr.gain.resize(nb);
  tr.offset.resize(nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const double l = grid.lambda[static_cast<std::size_t>(b)];
    const double water = 0.6 * gaussian(l, 0.94, 0.025) + 0.7 * gaussian(l, 1.14, 0.03) +
                         gaussian(l, 1.38, 0.05) + gaussian(l, 1.87, 0.06);
    const double blue = 0.1 * p.haze * std::exp(-(l - 0.4) / 0.15);
    tr.gain[b] = std::clamp(s * (1.05 - p.water_depth * water - blue), 0.5, 1.2);
    tr.offset[b] = 0.02 * p.haze * (2.0 - s) * std::exp(-(l - 0.4) / 0.25);
  }
  return tr;
}

void apply_atmosphere(std::span<double> spectra, const WavelengthGrid& grid, Atmosphere a,
                      TimeOfDay t) {
  const std::size_t nb = grid.size();
  if (nb == 0 || spectra.size() % nb != 0) throw ShapeError("spectra block is not a multiple of the band count");
  const auto tr = atmosphere_transform(grid, a, t);
  for (std::size_t off = 0; off < spectra.size(); off += nb) tr.apply(spectra.subspan(off, nb));
}

std::vector<Disc> draw_discs(const SceneConfig& config) {
  config.validate();
  auto rng = make_rng(config.seed, {hash_tag("geometry")});
  std::uniform_real_distribution<double> ux(0.0, config.width);
  std::uniform_real_distribution<double> uy(0.0, config.height);
  std::uniform_real_distribution<double> ulog(std::log(config.radius_min), std::log(config.radius_max));
  std::uniform_real_distribution<double> uangle(0.0, kTwoPi);
  std::vector<Disc> discs(static_cast<std::size_t>(config.n_discs));
  for (auto& d : discs) {
    d.x = ux(rng);
    d.y = uy(rng);
    d.radius = std::exp(ulog(rng));
    d.occlusion_start = uangle(rng);
    d.occluded_fraction = config.occlusion_fraction;
  }
  return discs;
}

SceneCube generate_scene(const SceneConfig& config, const WavelengthGrid& grid,
                         const std::vector<Endmember>& endmembers) {
  return generate_scene(config, grid, endmembers, draw_discs(config));
}

SceneCube generate_scene(const SceneConfig& config, const WavelengthGrid& grid,
                         const std::vector<Endmember>& endmembers, std::vector<Disc> discs) {
  config.validate();
  grid.validate();
  validate_library(endmembers, grid, config.smoothness_cap);
  for (const auto& d : discs) {
    if (d.radius < config.radius_min || d.radius > config.radius_max) {
      throw ConfigError("disc radius " + std::to_string(d.radius) + " outside radius range [" +
                        std::to_string(config.radius_min) + ", " +
                        std::to_string(config.radius_max) + "]");
    }
  }

  SceneCube cube;
  cube.config = config;
  cube.grid = grid;
  for (const auto& e : endmembers) cube.endmember_names.push_back(e.name);
  cube.abundance = rasterize_discs(discs, config.height, config.width, config.supersample);
  cube.discs = std::move(discs);

  const std::size_t nb = grid.size();
  const std::size_t npix = cube.abundance.size();
  const Endmember* target = nullptr;
  std::vector<const Endmember*> background;
  for (const auto& e : endmembers) {
    if (e.is_target) {
      target = &e;
    } else {
      background.push_back(&e);
    }
  }

  auto bg_rng = make_rng(config.seed, {hash_tag("background")});
  auto noise_rng = make_rng(config.seed, {hash_tag("noise"), static_cast<std::uint64_t>(config.atmosphere),
                                          static_cast<std::uint64_t>(config.time)});
  std::gamma_distribution<double> gamma(config.background_concentration, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto tr = atmosphere_transform(grid, config.atmosphere, config.time);

  cube.spectra.resize(npix * nb);
  std::vector<double> weights(background.size());
  std::vector<double> pixel(nb);
  for (std::size_t i = 0; i < npix; ++i) {
    double total = 0.0;
    for (auto& w : weights) {
      w = gamma(bg_rng);
      total += w;
    }
    if (!(total > 0.0)) {
      std::fill(weights.begin(), weights.end(), 1.0);
      total = static_cast<double>(weights.size());
    }
    const double target_frac = cube.abundance[i];
    const double bg_frac = 1.0 - target_frac;
    for (std::size_t b = 0; b < nb; ++b) {
      double v = target_frac * target->reflectance[b];
      for (std::size_t k = 0; k < background.size(); ++k) {
        v += bg_frac * (weights[k] / total) * background[k]->reflectance[b];
      }
      pixel[b] = v;
    }
    tr.apply(pixel);
    for (std::size_t b = 0; b < nb; ++b) {
      const double noisy = pixel[b] + config.noise_sd * noise(noise_rng);
      cube.spectra[i * nb + b] = static_cast<float>(noisy);
    }
  }
  return cube;
}

namespace {

json config_to_json(const SceneConfig& c) {
  return json{{"height", c.height},
              {"width", c.width},
              {"atmosphere", std::string(to_string(c.atmosphere))},
              {"time", std::string(to_string(c.time))},
              {"n_discs", c.n_discs},
              {"radius_range", {c.radius_min, c.radius_max}},
              {"occlusion_fraction", c.occlusion_fraction},
              {"noise_sd", c.noise_sd},
              {"seed", c.seed},
              {"supersample", c.supersample},
              {"smoothness_cap", c.smoothness_cap},
              {"background_concentration", c.background_concentration}};
}

SceneConfig config_from_json(const json& j) {
  SceneConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.atmosphere = parse_atmosphere(j.at("atmosphere").get<std::string>());
  c.time = parse_time(j.at("time").get<std::string>());
  c.n_discs = j.at("n_discs").get<int>();
  c.radius_min = j.at("radius_range").at(0).get<double>();
  c.radius_max = j.at("radius_range").at(1).get<double>();
  c.occlusion_fraction = j.at("occlusion_fraction").get<double>();
  c.noise_sd = j.at("noise_sd").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.supersample = j.at("supersample").get<int>();
  c.smoothness_cap = j.at("smoothness_cap").get<double>();
  c.background_concentration = j.at("background_concentration").get<double>();
  return c;
}

}  // namespace

void write_scene(const std::filesystem::path& path, const SceneCube& scene) {
  json discs = json::array();
  for (const auto& d : scene.discs) {
    discs.push_back({{"x", d.x}, {"y", d.y}, {"radius", d.radius},
                     {"occlusion_start", d.occlusion_start},
                     {"occluded_fraction", d.occluded_fraction}});
  }
  json header{{"format", "hsc"},
              {"version", 1},
              {"name", scene.config.name()},
              {"config", config_to_json(scene.config)},
              {"endmembers", scene.endmember_names},
              {"height", scene.height()},
              {"width", scene.width()},
              {"bands", scene.bands()},
              {"wavelengths", scene.grid.lambda},
              {"dtype", "float32"},
              {"byte_order", "little"},
              {"discs", discs}};
  std::vector<std::byte> payload;
  payload.reserve((scene.spectra.size() + scene.abundance.size()) * sizeof(float));
  append_payload(payload, std::span<const float>(scene.spectra));
  append_payload(payload, std::span<const float>(scene.abundance));
  write_container(path, std::move(header), payload);
}

SceneCube read_scene(const std::filesystem::path& path) {
  auto c = read_container(path);
  const auto& h = c.header;
  if (h.value("format", "") != "hsc") throw IoError(path.string() + " is not a scene container");
  if (h.value("dtype", "") != "float32" || h.value("byte_order", "") != "little") {
    throw IoError(path.string() + ": unsupported dtype or byte order");
  }
  SceneCube cube;
  try {
    cube.config = config_from_json(h.at("config"));
    cube.grid.lambda = h.at("wavelengths").get<std::vector<double>>();
    cube.endmember_names = h.at("endmembers").get<std::vector<std::string>>();
    for (const auto& d : h.at("discs")) {
      cube.discs.push_back({d.at("x").get<double>(), d.at("y").get<double>(),
                            d.at("radius").get<double>(), d.at("occlusion_start").get<double>(),
                            d.at("occluded_fraction").get<double>()});
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad scene header: " + e.what());
  }
  const std::size_t npix = static_cast<std::size_t>(cube.height()) * cube.width();
  PayloadReader reader(c.payload);
  cube.spectra = reader.read<float>(npix * cube.bands());
  cube.abundance = reader.read<float>(npix);
  if (!reader.exhausted()) throw IoError(path.string() + ": trailing payload bytes");
  return cube;
}

void write_endmembers_csv(const std::filesystem::path& path, const std::vector<Endmember>& lib) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::size_t nb = lib.empty() ? 0 : lib.front().reflectance.size();
  out << "name,is_target";
  for (std::size_t b = 0; b < nb; ++b) out << ",r_" << b;
  out << '\n';
  out.precision(17);
  for (const auto& e : lib) {
    if (e.reflectance.size() != nb) throw ShapeError("endmember library has ragged band counts");
    out << e.name << ',' << (e.is_target ? 1 : 0);
    for (double v : e.reflectance) out << ',' << v;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Endmember> read_endmembers_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("name,is_target", 0) != 0) {
    throw IoError(path.string() + ": missing endmember CSV header");
  }
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<Endmember> lib;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Endmember e;
    std::getline(ss, e.name, ',');
    std::getline(ss, cell, ',');
    e.is_target = cell == "1" || cell == "true";
    while (std::getline(ss, cell, ',')) {
      try {
        e.reflectance.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path.string() + ": bad reflectance value '" + cell + "'");
      }
    }
    if (e.reflectance.size() + 2 != columns) {
      throw IoError(path.string() + ": row '" + e.name + "' has the wrong number of columns");
    }
    lib.push_back(std::move(e));
  }
  return lib;
}

}  // namespace hsbnn::sim
