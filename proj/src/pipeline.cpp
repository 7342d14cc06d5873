#include "hsbnn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "hsbnn/error.hpp"
#include "hsbnn/random.hpp"

#ifndef HSBNN_VERSION
#define HSBNN_VERSION "0.0.0"
#endif

namespace hsbnn::pipeline {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void require_file(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) {
    throw IoError("missing input " + path.string() + " (run the " + stage + " stage first)");
  }
}

/// Scenes that must exist on disk: every test scene plus the training scene.
std::vector<SceneId> scenes_needed(const RunConfig& c) {
  auto out = c.scenes;
  if (std::find(out.begin(), out.end(), c.train_scene) == out.end()) out.insert(out.begin(), c.train_scene);
  return out;
}

sim::SceneCube load_scene(const RunConfig& c, const SceneId& id) {
  const auto path = scene_path(c, id);
  require_file(path, "simulate");
  return sim::read_scene(path);
}

bnn::LabeledBatch to_batch(const fpca::FeatureMatrix& fm) {
  bnn::LabeledBatch b;
  b.x = fm.scores;
  b.y.resize(static_cast<Eigen::Index>(fm.size()));
  for (std::size_t i = 0; i < fm.size(); ++i) b.y[static_cast<Eigen::Index>(i)] = fm.labels[i];
  return b;
}

/// Up to `count` probe rows: half from the positives, the rest from the
/// negatives, evenly spaced within each group.
std::vector<Eigen::Index> probe_rows(const fpca::FeatureMatrix& fm, int count) {
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t i = 0; i < fm.size(); ++i) (fm.labels[i] ? pos : neg).push_back(static_cast<Eigen::Index>(i));
  auto pick = [](const std::vector<Eigen::Index>& from, std::size_t n, std::vector<Eigen::Index>& into) {
    n = std::min(n, from.size());
    for (std::size_t k = 0; k < n; ++k) into.push_back(from[k * from.size() / n]);
  };
  std::vector<Eigen::Index> out;
  const auto want = static_cast<std::size_t>(count);
  pick(pos, want / 2, out);
  pick(neg, want - out.size(), out);
  std::sort(out.begin(), out.end());
  return out;
}

std::string fmt_edge(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

std::string_view version() { return HSBNN_VERSION; }

fs::path scene_path(const RunConfig& c, const SceneId& id) { return c.out_dir / "scenes" / (id.name() + ".hsc"); }

fs::path test_features_path(const RunConfig& c, const SceneId& id) {
  return c.out_dir / ("features_test_" + id.name() + ".csv");
}

fs::path posterior_path(const RunConfig& c, Method m) {
  return c.out_dir / ("posterior_" + lower(to_string(m)) + ".post");
}

fs::path summary_path(const RunConfig& c, const SceneId& id, Method m) {
  return c.out_dir / ("summary_" + id.name() + "_" + lower(to_string(m)) + ".csv");
}

bool in_half(const sim::SceneCube& scene, int col, Half half) {
  const double centre = col + 0.5;
  const double split = scene.width() / 2.0;
  switch (half) {
    case Half::Left: return centre < split;
    case Half::Right: return centre >= split;
    case Half::All: return true;
  }
  return true;
}

std::vector<fpca::PixelRef> half_pixels(const sim::SceneCube& scene, Half half) {
  std::vector<fpca::PixelRef> out;
  const auto name = scene.config.name();
  for (int r = 0; r < scene.height(); ++r) {
    for (int c = 0; c < scene.width(); ++c) {
      if (in_half(scene, c, half)) out.push_back({name, r, c});
    }
  }
  return out;
}

std::vector<fpca::PixelRef> build_training_set(const sim::SceneCube& scene, int ratio, std::uint64_t seed,
                                               Half half) {
  if (ratio < 1) throw ConfigError("nontarget ratio must be >= 1");
  std::vector<fpca::PixelRef> pos, neg;
  for (const auto& p : half_pixels(scene, half)) {
    (scene.abundance_at(p.row, p.col) > 0.0f ? pos : neg).push_back(p);
  }
  if (pos.empty()) throw DataError("training half of " + scene.config.name() + " contains no target pixels");
  const std::size_t want = pos.size() * static_cast<std::size_t>(ratio);
  if (want > neg.size()) {
    throw DataError("training half has " + std::to_string(neg.size()) + " non-target pixels, " +
                    std::to_string(want) + " requested");
  }
  auto rng = make_rng(seed, {hash_tag("nontarget-sample")});
  std::vector<fpca::PixelRef> chosen;
  std::sample(neg.begin(), neg.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(want), rng);
  auto out = pos;
  out.insert(out.end(), chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd feature_scale(const RunConfig& config) {
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(config.components);
  if (!config.standardize) return scale;
  const auto path = config.out_dir / "fpca.fpca";
  require_file(path, "featurize");
  const auto basis = fpca::read_basis(path);
  if (basis.eigenvalues.size() < config.components) throw ConfigError("fPCA basis has fewer components than requested");
  for (Eigen::Index k = 0; k < config.components; ++k) {
    if (basis.eigenvalues[k] > 0.0) scale[k] = 1.0 / std::sqrt(basis.eigenvalues[k]);
  }
  return scale;
}

// ---- heat maps ----

HeatMaps build_heatmaps(const uq::PredictiveSummary& summary, const sim::SceneCube& scene) {
  HeatMaps maps;
  maps.col_offset = scene.width() / 2;
  const int h = scene.height();
  const int w = scene.width() - maps.col_offset;
  for (Raster* r : {&maps.mean, &maps.width, &maps.error}) {
    r->height = h;
    r->width = w;
    r->channels = 1;
    r->values.assign(static_cast<std::size_t>(h) * w, std::numeric_limits<double>::quiet_NaN());
  }
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& p = summary.pixels[i];
    const int c = p.col - maps.col_offset;
    if (p.row < 0 || p.row >= h || c < 0 || c >= w) continue;
    const auto idx = static_cast<std::size_t>(p.row) * w + c;
    const auto& s = summary.stats[i];
    const double label = summary.abundance[i] > 0.0 ? 1.0 : 0.0;
    maps.mean.values[idx] = std::clamp(s.mean, 0.0, 1.0);
    maps.width.values[idx] = std::clamp(s.q_hi - s.q_lo, 0.0, 1.0);
    maps.error.values[idx] = std::clamp(std::abs(s.mean - label), 0.0, 1.0);
  }
  std::vector<std::string> missing;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (std::isnan(maps.mean.values[static_cast<std::size_t>(r) * w + c])) {
        missing.push_back(fpca::PixelRef{scene.config.name(), r, c + maps.col_offset}.id());
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 10); ++k) list += " " + missing[k];
    throw DataError("heat map: " + std::to_string(missing.size()) + " test pixels have no summary:" + list +
                    (missing.size() > 10 ? " ..." : ""));
  }

  // three bands nearest red/green/blue, scaled by the largest value shown
  std::size_t bands[3];
  const double targets[3] = {0.65, 0.55, 0.45};
  for (int k = 0; k < 3; ++k) {
    const auto& lam = scene.grid.lambda;
    bands[k] = static_cast<std::size_t>(
        std::min_element(lam.begin(), lam.end(),
                         [&](double a, double b) { return std::abs(a - targets[k]) < std::abs(b - targets[k]); }) -
        lam.begin());
  }
  maps.rgb.height = h;
  maps.rgb.width = w;
  maps.rgb.channels = 3;
  maps.rgb.values.resize(static_cast<std::size_t>(h) * w * 3);
  double peak = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto px = scene.pixel(r, c + maps.col_offset);
      for (int k = 0; k < 3; ++k) {
        const double v = std::max(0.0, static_cast<double>(px[bands[k]]));
        maps.rgb.values[(static_cast<std::size_t>(r) * w + c) * 3 + k] = v;
        peak = std::max(peak, v);
      }
    }
  }
  if (peak > 0.0) {
    for (auto& v : maps.rgb.values) v /= peak;
  }
  return maps;
}

void write_raster(const fs::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw ConfigError("raster must have 1 or 3 channels");
  if (raster.values.size() != static_cast<std::size_t>(raster.height) * raster.width * raster.channels) {
    throw ShapeError("raster size does not match its dimensions");
  }
  auto out = open_out(path);
  const bool gray = raster.channels == 1;
  out << (gray ? "P5" : "P6") << '\n' << raster.width << ' ' << raster.height << '\n' << (gray ? 65535 : 255) << '\n';
  for (double v : raster.values) {
    const double x = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    if (gray) {
      const auto q = static_cast<std::uint16_t>(std::lround(x * 65535.0));
      const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
      out.write(bytes, 2);
    } else {
      out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(x * 255.0))));
    }
  }
  finish(out, path);
}

Raster read_raster(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string magic;
  int maxval = 0;
  Raster r;
  in >> magic >> r.width >> r.height >> maxval;
  in.get();
  if (!in || (magic != "P5" && magic != "P6") || r.width <= 0 || r.height <= 0) {
    throw IoError(path.string() + ": not a binary PGM/PPM");
  }
  r.channels = magic == "P5" ? 1 : 3;
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(n * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(path.string() + ": truncated raster");
  r.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bytes == 2 ? (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1] : buf[i];
    r.values[i] = static_cast<double>(v) / maxval;
  }
  return r;
}

void export_heatmaps(const fs::path& dir, const std::string& stem, const uq::PredictiveSummary& summary,
                     const sim::SceneCube& scene) {
  fs::create_directories(dir);
  const auto maps = build_heatmaps(summary, scene);
  write_raster(dir / (stem + "_mean.pgm"), maps.mean);
  write_raster(dir / (stem + "_width.pgm"), maps.width);
  write_raster(dir / (stem + "_error.pgm"), maps.error);
}

// ---- manifest ----

nlohmann::json RunManifest::to_json() const {
  nlohmann::json files_json = nlohmann::json::array();
  for (const auto& f : files) files_json.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"version", version},
          {"status", status},
          {"failed_stage", failed_stage},
          {"config", config},
          {"timings", timings},
          {"files", files_json}};
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::vector<FileEntry> hash_directory(const fs::path& dir) {
  std::vector<FileEntry> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    out.push_back({rel, sha256_file(e.path()), e.file_size()});
  }
  std::sort(out.begin(), out.end(), [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
  return out;
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    RunManifest m;
    m.config = j.at("config");
    m.version = j.at("version").get<std::string>();
    m.status = j.at("status").get<std::string>();
    m.failed_stage = j.value("failed_stage", "");
    m.timings = j.at("timings").get<std::map<std::string, double>>();
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                         f.at("bytes").get<std::uintmax_t>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
}

RunManifest write_manifest(const RunConfig& config, const std::map<std::string, double>& timings,
                           const std::string& status, const std::string& failed_stage) {
  fs::create_directories(config.out_dir);
  const auto path = config.out_dir / "manifest.json";
  RunManifest m;
  if (fs::exists(path)) {
    try {
      m.timings = read_manifest(path).timings;
    } catch (const IoError&) {
      // a corrupt manifest is simply replaced
    }
  }
  for (const auto& [k, v] : timings) m.timings[k] = v;
  m.config = config.to_json();
  m.files = hash_directory(config.out_dir);
  m.version = std::string(version());
  m.status = status;
  m.failed_stage = failed_stage;
  auto out = open_out(path);
  out << m.to_json().dump(2) << '\n';
  finish(out, path);
  return m;
}

// ---- stages ----

Timings stage_simulate(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.out_dir / "scenes");
  const auto grid = sim::WavelengthGrid::uniform();
  const auto lib = sim::default_endmembers(grid);
  sim::write_endmembers_csv(config.out_dir / "endmembers.csv", lib);
  for (const auto& id : scenes_needed(config)) {
    sim::write_scene(scene_path(config, id), sim::generate_scene(config.scene_config(id), grid, lib));
  }
  return {};
}

Timings stage_featurize(const RunConfig& config) {
  config.validate();
  const auto train_scene = load_scene(config, config.train_scene);
  const auto k = static_cast<std::size_t>(config.components);

  const auto fit_pixels = half_pixels(train_scene, Half::Left);
  const auto basis = fpca::fit_fpca(fpca::gather_spectra(train_scene, fit_pixels), train_scene.grid);
  if (k > static_cast<std::size_t>(basis.eigenvalues.size())) {
    throw ConfigError("components = " + std::to_string(k) + " exceeds the " +
                      std::to_string(basis.eigenvalues.size()) + " available eigenfunctions");
  }
  fpca::write_basis(config.out_dir / "fpca.fpca", basis);
  {
    nlohmann::json j{{"components", k},
                     {"n_fit", basis.n_fit},
                     {"total_variance", basis.total_variance},
                     {"explained_variance", fpca::explained_variance(basis, k)},
                     {"explained_total_variance", fpca::explained_total_variance(basis, k)},
                     {"eigenvalues", std::vector<double>(basis.eigenvalues.data(),
                                                         basis.eigenvalues.data() + basis.eigenvalues.size())}};
    const auto path = config.out_dir / "fpca_summary.json";
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
  }

  const auto train_pixels =
      build_training_set(train_scene, config.nontarget_ratio, config.split_seed(), Half::Left);
  fpca::write_features_csv(config.out_dir / "features_train.csv",
                           fpca::featurize(basis, train_scene, train_pixels, k));

  for (const auto& id : config.scenes) {
    const auto scene = id == config.train_scene ? train_scene : load_scene(config, id);
    fpca::write_features_csv(test_features_path(config, id),
                             fpca::featurize(basis, scene, half_pixels(scene, Half::Right), k));
  }
  return {};
}

Timings stage_train(const RunConfig& config) {
  config.validate();
  const auto train_path = config.out_dir / "features_train.csv";
  require_file(train_path, "featurize");
  auto features = fpca::read_features_csv(train_path);
  const auto scale = feature_scale(config);
  features.scores = features.scores * scale.asDiagonal();
  const bnn::Model model(config.architecture(), config.prior);
  const auto batch = to_batch(features);
  batch.validate(config.architecture().input_dim());

  Timings timings;
  for (auto method : config.methods) {
    const auto start = Clock::now();
    if (method == Method::Mcmc) {
      auto samples =
          hmc::sample(bnn::make_log_posterior(model, batch), static_cast<Eigen::Index>(model.num_params()),
                      config.hmc_config());
      samples.layer_sizes = config.architecture().layer_sizes;
      timings["train_mcmc"] = seconds_since(start);
      write_posterior(posterior_path(config, method), samples);

      // convergence check on prediction traces of probe pixels from the
      // training scene's test half
      const auto probe_path = test_features_path(config, config.train_scene);
      auto probe_fm = features;
      if (fs::exists(probe_path)) {
        probe_fm = fpca::read_features_csv(probe_path);
        probe_fm.scores = probe_fm.scores * scale.asDiagonal();
      }
      const auto rows = probe_rows(probe_fm, config.probe_pixels);
      Eigen::MatrixXd probe_x(static_cast<Eigen::Index>(rows.size()), probe_fm.scores.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) probe_x.row(static_cast<Eigen::Index>(i)) = probe_fm.scores.row(rows[i]);
      if (samples.num_chains() >= 2 && !rows.empty()) {
        const auto report = hmc::rhat_on_predictions(samples, model, probe_x);
        const auto flagged = report.flagged();
        const auto path = config.out_dir / "rhat_mcmc.csv";
        auto out = open_out(path);
        out << "pixel_id,scene,rhat,flagged\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const auto& p = probe_fm.pixels[static_cast<std::size_t>(rows[i])];
          out << p.id() << ',' << p.scene << ',' << report.rhat[i] << ',' << (flagged[i] ? 1 : 0) << '\n';
        }
        finish(out, path);
      }
    } else {
      const auto fit = vi::fit_vi(model, batch, config.vi_config());
      auto samples = vi::draw_from_vi(fit.params, config.vi_draws, derive_seed(config.seed, {hash_tag("vi-draws")}));
      timings["train_vi"] = seconds_since(start);
      samples.layer_sizes = config.architecture().layer_sizes;
      samples.config = config.vi_config().to_json();
      vi::write_vparams(config.out_dir / "vparams_vi.vparams", fit.params,
                        {{"architecture", samples.layer_sizes}, {"config", samples.config}});
      write_posterior(posterior_path(config, method), samples);
      const auto path = config.out_dir / "vi_loss.csv";
      auto out = open_out(path);
      out << "epoch,train_loss,validation_loss\n";
      for (std::size_t e = 0; e < fit.train_loss.size(); ++e) {
        out << e + 1 << ',' << fit.train_loss[e] << ',';
        if (e < fit.validation_loss.size()) out << fit.validation_loss[e];
        out << '\n';
      }
      finish(out, path);
    }
  }
  return timings;
}

Timings stage_predict(const RunConfig& config) {
  config.validate();
  const bnn::Model model(config.architecture(), config.prior);
  const auto scale = feature_scale(config);
  for (auto method : config.methods) {
    const auto post = posterior_path(config, method);
    require_file(post, "train");
    const auto samples = read_posterior(post);
    for (const auto& id : config.scenes) {
      const auto fpath = test_features_path(config, id);
      require_file(fpath, "featurize");
      auto fm = fpca::read_features_csv(fpath);
      fm.scores = fm.scores * scale.asDiagonal();
      uq::write_summary_csv(summary_path(config, id, method), uq::summarize_features(samples, model, fm, config.hc));
    }
  }
  return {};
}

Timings stage_evaluate(const RunConfig& config) {
  config.validate();
  const auto dir = config.out_dir;
  const auto edges = config.bin_edges();

  auto auc_path = dir / "auc.csv";
  auto auc = open_out(auc_path);
  auc << "scene,method,subset,cap,auc,positives,negatives\n";
  auto pd_path = dir / "pd_at_far.csv";
  auto pd = open_out(pd_path);
  pd << "scene,method,subset,bin_lo,bin_hi,pd,count,threshold,realized_far\n";
  auto hc_path = dir / "hc_proportion.csv";
  auto hc = open_out(hc_path);
  hc << "scene,method,fraction,members,pixels\n";
  auto lc_path = dir / "lc_hist.csv";
  auto lc = open_out(lc_path);
  lc << "scene,method,subset,bin_lo,bin_hi,count\n";
  std::vector<std::string> warnings;

  auto write_pd = [&](const std::string& scene, const std::string& method, const std::string& subset_name,
                      const std::vector<double>& values, const std::vector<std::size_t>* counts, double threshold,
                      double realized) {
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      pd << scene << ',' << method << ',' << subset_name << ',' << fmt_edge(edges[k]) << ',' << fmt_edge(edges[k + 1])
         << ',' << values[k] << ',';
      if (counts) pd << (*counts)[k];
      pd << ',';
      if (counts) pd << threshold << ',' << realized;
      else pd << ',';
      pd << '\n';
    }
  };

  for (auto method : config.methods) {
    const std::string mname(to_string(method));
    const auto mtag = lower(mname);
    std::vector<eval::DetectionAtFar> full_rows, hc_rows;
    for (const auto& id : config.scenes) {
      const auto spath = summary_path(config, id, method);
      require_file(spath, "predict");
      const auto summary = uq::read_summary_csv(spath);
      const auto scene = id.name();
      const auto hc_summary = eval::subset(summary, summary.hc_mask());

      auto evaluate_subset = [&](const uq::PredictiveSummary& s, const std::string& subset_name,
                                 const fs::path& roc_path, std::vector<eval::DetectionAtFar>& rows) {
        const auto scores = s.means();
        const auto rocs = eval::roc_by_abundance(scores, s.abundance, config.caps);
        for (const auto& w : rocs.warnings) warnings.push_back(scene + " " + mname + " " + subset_name + ": " + w);
        eval::write_roc_csv(roc_path, rocs);
        eval::write_auc_rows(auc, scene, mname, subset_name, rocs);
        try {
          auto d = eval::pd_at_far(scores, s.abundance, config.far_level, edges, config.bin_mode);
          write_pd(scene, mname, subset_name, d.pd, &d.counts, d.threshold, d.realized_far);
          rows.push_back(std::move(d));
        } catch (const DataError& e) {
          warnings.push_back(scene + " " + mname + " " + subset_name + ": " + e.what());
        }
      };
      evaluate_subset(summary, "all", dir / ("roc_" + scene + "_" + mtag + ".csv"), full_rows);
      evaluate_subset(hc_summary, "hc", dir / ("roc_hc_" + scene + "_" + mtag + ".csv"), hc_rows);

      const auto prop = eval::hc_proportion(summary, scene, mname);
      hc << scene << ',' << mname << ',' << prop.fraction << ',' << prop.members << ',' << prop.pixels << '\n';

      for (bool target_only : {false, true}) {
        const auto counts = eval::lc_histogram(summary, target_only, config.lc_bins);
        for (int b = 0; b < config.lc_bins; ++b) {
          lc << scene << ',' << mname << ',' << (target_only ? "target" : "all") << ','
             << fmt_edge(static_cast<double>(b) / config.lc_bins) << ','
             << fmt_edge(static_cast<double>(b + 1) / config.lc_bins) << ',' << counts[static_cast<std::size_t>(b)]
             << '\n';
        }
      }
    }
    if (!full_rows.empty()) write_pd("average", mname, "all", eval::average_pd(full_rows), nullptr, 0, 0);
    if (!hc_rows.empty()) write_pd("average", mname, "hc", eval::average_pd(hc_rows), nullptr, 0, 0);
  }
  finish(auc, auc_path);
  finish(pd, pd_path);
  finish(hc, hc_path);
  finish(lc, lc_path);

  const auto wpath = dir / "warnings.txt";
  auto w = open_out(wpath);
  for (const auto& line : warnings) w << line << '\n';
  finish(w, wpath);
  return {};
}

Timings stage_report(const RunConfig& config) {
  config.validate();
  const auto dir = config.out_dir / "heatmaps";
  fs::create_directories(dir);
  for (const auto& id : config.scenes) {
    const auto scene = load_scene(config, id);
    bool rgb_written = false;
    for (auto method : config.methods) {
      const auto spath = summary_path(config, id, method);
      require_file(spath, "predict");
      const auto summary = uq::read_summary_csv(spath);
      const auto stem = id.name() + "_" + lower(to_string(method));
      export_heatmaps(dir, stem, summary, scene);
      if (!rgb_written) {
        write_raster(dir / (id.name() + "_rgb.ppm"), build_heatmaps(summary, scene).rgb);
        rgb_written = true;
      }
    }
  }
  return {};
}

RunManifest run_stage(const RunConfig& config, const std::string& stage) {
  using StageFn = Timings (*)(const RunConfig&);
  static const std::map<std::string, StageFn> stages{{"simulate", stage_simulate}, {"featurize", stage_featurize},
                                                     {"train", stage_train},       {"predict", stage_predict},
                                                     {"evaluate", stage_evaluate}, {"report", stage_report}};
  const auto it = stages.find(stage);
  if (it == stages.end()) throw ConfigError("unknown stage '" + stage + "'");
  fs::create_directories(config.out_dir);
  const auto start = Clock::now();
  Timings timings;
  try {
    timings = it->second(config);
  } catch (...) {
    try {
      write_manifest(config, {}, "failed", stage);
    } catch (...) {
      // keep the original error
    }
    throw;
  }
  timings[stage] = seconds_since(start);
  return write_manifest(config, timings);
}

RunManifest run_pipeline(const RunConfig& config) {
  config.validate();
  const auto start = Clock::now();
  RunManifest m;
  for (const char* stage : kStages) m = run_stage(config, stage);
  return write_manifest(config, {{"total", seconds_since(start)}});
}

}  // namespace hsbnn::pipeline
