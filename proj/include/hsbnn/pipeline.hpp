#pragma once

// End-to-end orchestration: simulate -> featurize -> train -> predict ->
// evaluate -> report, writing every artifact plus a manifest of content
// hashes into one output directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsbnn/bnn_model.hpp"
#include "hsbnn/detection_eval.hpp"
#include "hsbnn/fpca.hpp"
#include "hsbnn/hmc.hpp"
#include "hsbnn/posterior_uq.hpp"
#include "hsbnn/spectra_sim.hpp"
#include "hsbnn/vi.hpp"

namespace hsbnn::pipeline {

std::string_view version();

struct SceneId {
  sim::Atmosphere atmosphere = sim::Atmosphere::MLS;
  sim::TimeOfDay time = sim::TimeOfDay::T1200;

  std::string name() const { return sim::scene_name(atmosphere, time); }
  static SceneId parse(const std::string& name);
  friend bool operator==(const SceneId&, const SceneId&) = default;
};

/// All nine atmosphere x time combinations.
std::vector<SceneId> all_scenes();

struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<SceneId> scenes = all_scenes();
  SceneId train_scene{};
  sim::SceneConfig scene;  // atmosphere/time/seed are set per scene
  int nontarget_ratio = 10;
  int components = 25;
  std::vector<Method> methods{Method::Mcmc, Method::Vi};
  std::vector<int> hidden{10, 10, 10};
  bool standardize = true;  // network sees score_k / sqrt(lambda_k)
  bnn::PriorSpec prior;
  hmc::HmcConfig hmc{.leapfrog_steps = 128};
  vi::ViConfig vi;
  int vi_draws = 4000;
  uq::HcConfig hc;
  double far_level = 0.05;
  double bin_width = 0.1;
  eval::BinMode bin_mode = eval::BinMode::Binned;
  std::vector<double> caps{0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  int lc_bins = 20;
  int probe_pixels = 40;
  int threads = 0;
  std::filesystem::path out_dir = "hsbnn_out";

  bnn::Architecture architecture() const;
  sim::SceneConfig scene_config(const SceneId& id) const;
  /// Engine seeds derived from the master seed.
  hmc::HmcConfig hmc_config() const;
  vi::ViConfig vi_config() const;
  std::uint64_t split_seed() const;
  std::vector<double> bin_edges() const;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Parses the sectioned key = value config grammar (see README). Unknown
/// sections or keys are configuration errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

enum class Half { Left, Right, All };

/// True when the pixel centre lies in the requested half of the scene.
bool in_half(const sim::SceneCube& scene, int col, Half half);

std::vector<fpca::PixelRef> half_pixels(const sim::SceneCube& scene, Half half);

/// Every abundance > 0 pixel of the chosen half, plus ratio x (positive count)
/// abundance-0 pixels sampled without replacement. Deterministic in `seed`.
std::vector<fpca::PixelRef> build_training_set(const sim::SceneCube& scene, int ratio,
                                               std::uint64_t seed, Half half = Half::Left);

/// Per-component multipliers applied to fPC scores before they reach the
/// network: 1/sqrt(lambda_k) from <out>/fpca.fpca when standardizing (1 for a
/// zero eigenvalue), otherwise all ones.
Eigen::VectorXd feature_scale(const RunConfig& config);

/// Gray/colour rasters aligned with the scene's test half.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> values;  // row-major, channel-interleaved, in [0, 1]

  double at(int row, int col, int channel = 0) const {
    return values[(static_cast<std::size_t>(row) * width + col) * channels + channel];
  }
};

struct HeatMaps {
  Raster mean;
  Raster width;
  Raster error;
  Raster rgb;
  int col_offset = 0;  // scene column of raster column 0
};

/// Posterior mean, interval width, |mean - label| and a three-band RGB
/// composite for the test half. Throws DataError listing any missing pixels.
HeatMaps build_heatmaps(const uq::PredictiveSummary& summary, const sim::SceneCube& scene);

/// 16-bit binary PGM (P5) or 8-bit PPM (P6) depending on channel count.
void write_raster(const std::filesystem::path& path, const Raster& raster);
Raster read_raster(const std::filesystem::path& path);

void export_heatmaps(const std::filesystem::path& dir, const std::string& stem,
                     const uq::PredictiveSummary& summary, const sim::SceneCube& scene);

struct FileEntry {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  nlohmann::json config;
  std::vector<FileEntry> files;
  std::map<std::string, double> timings;  // seconds per stage
  std::string version;
  std::string status = "ok";
  std::string failed_stage;

  nlohmann::json to_json() const;
};

std::string sha256_file(const std::filesystem::path& path);

/// Hashes every file under `dir` except manifest.json, sorted by path.
std::vector<FileEntry> hash_directory(const std::filesystem::path& dir);

/// Writes <out>/manifest.json, merging timings recorded by earlier stages.
RunManifest write_manifest(const RunConfig& config, const std::map<std::string, double>& timings,
                           const std::string& status = "ok", const std::string& failed_stage = {});
RunManifest read_manifest(const std::filesystem::path& path);

/// Wall-clock seconds keyed by stage (or sub-stage, e.g. "train_mcmc").
using Timings = std::map<std::string, double>;

// Stages. Each reads its inputs from and writes its outputs to config.out_dir
// and returns any sub-stage timings it measured.
Timings stage_simulate(const RunConfig& config);
Timings stage_featurize(const RunConfig& config);
Timings stage_train(const RunConfig& config);
Timings stage_predict(const RunConfig& config);
Timings stage_evaluate(const RunConfig& config);
Timings stage_report(const RunConfig& config);

inline constexpr const char* kStages[] = {"simulate", "featurize", "train", "predict", "evaluate", "report"};

/// Runs one named stage, records its wall-clock time and refreshes the
/// manifest.
RunManifest run_stage(const RunConfig& config, const std::string& stage);

/// Runs every stage in order. On failure a partial manifest naming the failed
/// stage is written before the error propagates.
RunManifest run_pipeline(const RunConfig& config);

// Artifact names inside the output directory
std::filesystem::path scene_path(const RunConfig& config, const SceneId& id);
std::filesystem::path test_features_path(const RunConfig& config, const SceneId& id);
std::filesystem::path posterior_path(const RunConfig& config, Method method);
std::filesystem::path summary_path(const RunConfig& config, const SceneId& id, Method method);

}  // namespace hsbnn::pipeline
