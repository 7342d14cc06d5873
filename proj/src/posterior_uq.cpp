#include "hsbnn/posterior_uq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hsbnn/error.hpp"

namespace hsbnn::uq {

void HcConfig::validate() const {
  if (!(lower > 0.0 && lower < upper && upper < 1.0)) {
    throw ConfigError("HC thresholds must satisfy 0 < lower < upper < 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
}

namespace {

void check_compatible(const PosteriorSamples& samples, const bnn::Model& model) {
  if (!samples.layer_sizes.empty() && samples.layer_sizes != model.architecture().layer_sizes) {
    throw ConfigError("posterior samples were drawn for a different architecture");
  }
  if (static_cast<std::size_t>(samples.dim()) != model.num_params()) {
    throw ConfigError("posterior draws have " + std::to_string(samples.dim()) +
                      " parameters, network needs " + std::to_string(model.num_params()));
  }
}

void check_nonempty(std::span<const double> draws) {
  if (draws.empty()) throw DataError("no posterior draws");
}

}  // namespace

Eigen::VectorXd predictive_draws(const PosteriorSamples& samples, const bnn::Model& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_compatible(samples, model);
  if (x.size() != model.architecture().input_dim()) {
    throw ConfigError("input has " + std::to_string(x.size()) + " features, network expects " +
                      std::to_string(model.architecture().input_dim()));
  }
  Eigen::VectorXd out(samples.num_draws());
  for (Eigen::Index s = 0; s < samples.num_draws(); ++s) {
    out[s] = model.forward(samples.draws.row(s).transpose(), x);
  }
  return out;
}

Eigen::MatrixXd predictive_matrix(const PosteriorSamples& samples, const bnn::Model& model,
                                  const Eigen::MatrixXd& x) {
  check_compatible(samples, model);
  if (x.cols() != model.architecture().input_dim()) throw ConfigError("feature dimension mismatch");
  Eigen::MatrixXd out(samples.num_draws(), x.rows());
  for (Eigen::Index s = 0; s < samples.num_draws(); ++s) {
    out.row(s) = model.forward_batch(samples.draws.row(s).transpose(), x).transpose();
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  check_nonempty(sorted);
  p = std::clamp(p, 0.0, 1.0);
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::pair<double, double> credible_interval(std::span<const double> draws, double alpha) {
  check_nonempty(draws);
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  return {quantile_sorted(sorted, alpha / 2.0), quantile_sorted(sorted, 1.0 - alpha / 2.0)};
}

double fraction_below(std::span<const double> draws, double threshold) {
  check_nonempty(draws);
  const auto n = std::count_if(draws.begin(), draws.end(), [&](double v) { return v < threshold; });
  return static_cast<double>(n) / static_cast<double>(draws.size());
}

double fraction_above(std::span<const double> draws, double threshold) {
  check_nonempty(draws);
  const auto n = std::count_if(draws.begin(), draws.end(), [&](double v) { return v > threshold; });
  return static_cast<double>(n) / static_cast<double>(draws.size());
}

bool hc_membership(std::span<const double> draws, const HcConfig& config) {
  const double need = 1.0 - config.alpha;
  return fraction_below(draws, config.lower) > need || fraction_above(draws, config.upper) > need;
}

bool lc_membership(std::span<const double> draws, const HcConfig& config, double alpha) {
  const auto [lo, hi] = credible_interval(draws, alpha);
  return lo < config.lower && hi > config.upper;
}

PixelSummary summarize(std::span<const double> draws, const HcConfig& config) {
  check_nonempty(draws);
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  PixelSummary s;
  double total = 0.0;
  for (double v : draws) total += v;
  s.mean = total / static_cast<double>(draws.size());
  s.q_lo = quantile_sorted(sorted, config.alpha / 2.0);
  s.q_hi = quantile_sorted(sorted, 1.0 - config.alpha / 2.0);
  s.p_below = fraction_below(draws, config.lower);
  s.p_above = fraction_above(draws, config.upper);
  const double need = 1.0 - config.alpha;
  s.hc = s.p_below > need || s.p_above > need;
  s.lc = s.q_lo < config.lower && s.q_hi > config.upper;
  return s;
}

std::vector<double> PredictiveSummary::means() const {
  std::vector<double> m;
  m.reserve(stats.size());
  for (const auto& s : stats) m.push_back(s.mean);
  return m;
}

std::vector<bool> PredictiveSummary::hc_mask() const {
  std::vector<bool> m;
  for (const auto& s : stats) m.push_back(s.hc);
  return m;
}

std::vector<bool> PredictiveSummary::lc_mask() const {
  std::vector<bool> m;
  for (const auto& s : stats) m.push_back(s.lc);
  return m;
}

PredictiveSummary summarize_features(const PosteriorSamples& samples, const bnn::Model& model,
                                     const fpca::FeatureMatrix& features, const HcConfig& config) {
  config.validate();
  const Eigen::MatrixXd preds = predictive_matrix(samples, model, features.scores);
  PredictiveSummary out;
  out.pixels = features.pixels;
  out.abundance = features.abundance;
  out.stats.reserve(features.size());
  std::vector<double> column(static_cast<std::size_t>(preds.rows()));
  for (Eigen::Index i = 0; i < preds.cols(); ++i) {
    for (Eigen::Index s = 0; s < preds.rows(); ++s) column[static_cast<std::size_t>(s)] = preds(s, i);
    out.stats.push_back(summarize(column, config));
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const PredictiveSummary& summary) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "pixel_id,scene,abundance,mean,q_lo,q_hi,p_below,p_above,hc,lc\n";
  out.precision(17);
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& s = summary.stats[i];
    out << summary.pixels[i].id() << ',' << summary.pixels[i].scene << ',' << summary.abundance[i] << ','
        << s.mean << ',' << s.q_lo << ',' << s.q_hi << ',' << s.p_below << ',' << s.p_above << ','
        << (s.hc ? 1 : 0) << ',' << (s.lc ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PredictiveSummary read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "pixel_id,scene,abundance,mean,q_lo,q_hi,p_below,p_above,hc,lc") {
    throw IoError(path.string() + ": missing summary CSV header");
  }
  PredictiveSummary out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw IoError(path.string() + ": malformed row '" + line + "'");
    try {
      out.pixels.push_back(fpca::PixelRef::parse(cells[1], cells[0]));
      out.abundance.push_back(std::stod(cells[2]));
      PixelSummary s;
      s.mean = std::stod(cells[3]);
      s.q_lo = std::stod(cells[4]);
      s.q_hi = std::stod(cells[5]);
      s.p_below = std::stod(cells[6]);
      s.p_above = std::stod(cells[7]);
      s.hc = cells[8] == "1";
      s.lc = cells[9] == "1";
      out.stats.push_back(s);
    } catch (const std::invalid_argument&) {
      throw IoError(path.string() + ": non-numeric cell in row '" + line + "'");
    }
  }
  return out;
}

}  // namespace hsbnn::uq
