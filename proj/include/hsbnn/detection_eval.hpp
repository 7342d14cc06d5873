#pragma once

// Abundance-stratified detection metrics: ROC/AUC per abundance cap,
// probability of detection at a constant false-alarm rate, and HC/LC set
// statistics.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsbnn/posterior_uq.hpp"

namespace hsbnn::eval {

struct RocCurve {
  double abundance_cap = 1.0;
  std::vector<double> thresholds;  // descending; first is +inf
  std::vector<double> far;
  std::vector<double> pd;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// ROC of `scores` for labels (true = positive), sweeping every distinct
/// score as a threshold ("score >= t" is a detection). Tied scores move in a
/// single step, so the trapezoid AUC equals the Mann-Whitney statistic.
RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive);

struct RocSet {
  std::vector<RocCurve> curves;
  std::vector<std::string> warnings;  // caps omitted for lack of positives
};

/// For each cap f: positives are pixels with 0 < abundance <= f, negatives
/// the abundance-0 pixels.
RocSet roc_by_abundance(std::span<const double> scores, std::span<const double> abundance,
                        std::span<const double> caps);

enum class BinMode { Binned, Cumulative };

struct DetectionAtFar {
  double far_level = 0.05;
  double threshold = 0.0;
  double realized_far = 0.0;
  std::vector<double> bin_edges;
  std::vector<double> pd;              // NaN for empty bins
  std::vector<std::size_t> counts;     // pixels per bin
  BinMode mode = BinMode::Binned;
};

/// Width-0.1 bins on (0, 1].
std::vector<double> default_bin_edges();

/// Threshold t is the empirical (1 - far_level) quantile of the negative
/// scores (t = -inf when far_level >= 1). Pd of a bin is the fraction of its
/// pixels with score > t. Binned: [e_k, e_k+1), last bin closed, abundance > 0
/// only. Cumulative: 0 < abundance <= e_k+1.
DetectionAtFar pd_at_far(std::span<const double> scores, std::span<const double> abundance,
                         double far_level, const std::vector<double>& bin_edges,
                         BinMode mode = BinMode::Binned);

/// Unweighted mean of per-scene Pd per bin, skipping scenes where the bin is
/// empty (NaN).
std::vector<double> average_pd(const std::vector<DetectionAtFar>& per_scene);

struct SceneProportion {
  std::string scene;
  std::string method;
  double fraction = 0.0;
  std::size_t members = 0;
  std::size_t pixels = 0;
};

SceneProportion hc_proportion(const uq::PredictiveSummary& summary, const std::string& scene,
                              const std::string& method);

/// Counts of LC posterior means in n_bins equal-width bins on [0, 1].
std::vector<std::size_t> lc_histogram(const uq::PredictiveSummary& summary, bool target_only, int n_bins);

/// Restricts a summary to the pixels selected by `mask`.
uq::PredictiveSummary subset(const uq::PredictiveSummary& summary, const std::vector<bool>& mask);

// CSV writers for evaluation artifacts
void write_roc_csv(const std::filesystem::path& path, const RocSet& rocs);
void write_auc_rows(std::ostream& out, const std::string& scene, const std::string& method,
                    const std::string& subset_name, const RocSet& rocs);

}  // namespace hsbnn::eval
