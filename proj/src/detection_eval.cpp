#include "hsbnn/detection_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "hsbnn/error.hpp"

namespace hsbnn::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_aligned(std::span<const double> scores, std::size_t other) {
  if (scores.size() != other) throw ShapeError("scores and labels/abundance are not aligned");
}

std::string format_cap(double cap) {
  std::ostringstream ss;
  ss << cap;
  return ss.str();
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive) {
  check_aligned(scores, positive.size());
  RocCurve roc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("roc_curve: non-finite score");
    (positive[i] ? roc.positives : roc.negatives) += 1;
  }
  if (roc.positives == 0 || roc.negatives == 0) {
    throw DataError("roc_curve needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double p = static_cast<double>(roc.positives);
  const double n = static_cast<double>(roc.negatives);
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.far.push_back(0.0);
  roc.pd.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (positive[order[i]] ? tp : fp) += 1;
    roc.thresholds.push_back(t);
    roc.far.push_back(static_cast<double>(fp) / n);
    roc.pd.push_back(static_cast<double>(tp) / p);
  }
  double auc = 0.0;
  for (std::size_t k = 1; k < roc.far.size(); ++k) {
    auc += (roc.far[k] - roc.far[k - 1]) * 0.5 * (roc.pd[k] + roc.pd[k - 1]);
  }
  roc.auc = auc;
  return roc;
}

RocSet roc_by_abundance(std::span<const double> scores, std::span<const double> abundance,
                        std::span<const double> caps) {
  check_aligned(scores, abundance.size());
  RocSet out;
  for (double cap : caps) {
    if (!(cap > 0.0 && cap <= 1.0)) throw ConfigError("abundance caps must lie in (0,1]");
    std::vector<double> sel_scores;
    std::vector<bool> sel_pos;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double a = abundance[i];
      if (a == 0.0) {
        sel_scores.push_back(scores[i]);
        sel_pos.push_back(false);
      } else if (a > 0.0 && a <= cap) {
        sel_scores.push_back(scores[i]);
        sel_pos.push_back(true);
        ++positives;
      }
    }
    if (positives == 0 || positives == sel_scores.size()) {
      out.warnings.push_back("abundance cap " + format_cap(cap) +
                             (positives == 0 ? ": no positive pixels, curve omitted"
                                             : ": no negative pixels, curve omitted"));
      continue;
    }
    auto roc = roc_curve(sel_scores, sel_pos);
    roc.abundance_cap = cap;
    out.curves.push_back(std::move(roc));
  }
  return out;
}

std::vector<double> default_bin_edges() {
  std::vector<double> e;
  for (int k = 0; k <= 10; ++k) e.push_back(k / 10.0);
  return e;
}

DetectionAtFar pd_at_far(std::span<const double> scores, std::span<const double> abundance,
                         double far_level, const std::vector<double>& bin_edges, BinMode mode) {
  check_aligned(scores, abundance.size());
  if (!(far_level > 0.0 && far_level <= 1.0)) throw ConfigError("far_level must lie in (0,1]");
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end())) {
    throw ConfigError("bin edges must be ascending with at least two entries");
  }
  std::vector<double> neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (abundance[i] == 0.0) neg.push_back(scores[i]);
  }
  if (neg.empty()) throw DataError("pd_at_far: no negative pixels, threshold is undefined");
  std::sort(neg.begin(), neg.end());

  DetectionAtFar out;
  out.far_level = far_level;
  out.mode = mode;
  out.bin_edges = bin_edges;
  out.threshold = far_level >= 1.0 ? -std::numeric_limits<double>::infinity()
                                   : uq::quantile_sorted(neg, 1.0 - far_level);
  const auto false_alarms = std::count_if(neg.begin(), neg.end(), [&](double s) { return s > out.threshold; });
  out.realized_far = static_cast<double>(false_alarms) / static_cast<double>(neg.size());

  const std::size_t bins = bin_edges.size() - 1;
  std::vector<std::size_t> hits(bins, 0);
  out.counts.assign(bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double a = abundance[i];
    if (!(a > 0.0)) continue;
    for (std::size_t k = 0; k < bins; ++k) {
      bool in_bin = false;
      if (mode == BinMode::Binned) {
        const bool last = k + 1 == bins;
        in_bin = a >= bin_edges[k] && (a < bin_edges[k + 1] || (last && a <= bin_edges[k + 1]));
      } else {
        in_bin = a <= bin_edges[k + 1];
      }
      if (!in_bin) continue;
      ++out.counts[k];
      if (scores[i] > out.threshold) ++hits[k];
    }
  }
  out.pd.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    out.pd[k] = out.counts[k] ? static_cast<double>(hits[k]) / static_cast<double>(out.counts[k]) : kNaN;
  }
  return out;
}

std::vector<double> average_pd(const std::vector<DetectionAtFar>& per_scene) {
  if (per_scene.empty()) return {};
  const std::size_t bins = per_scene.front().pd.size();
  std::vector<double> avg(bins, kNaN);
  for (std::size_t k = 0; k < bins; ++k) {
    double total = 0.0;
    int used = 0;
    for (const auto& d : per_scene) {
      if (d.pd.size() != bins) throw ShapeError("average_pd: scenes use different bins");
      if (std::isnan(d.pd[k])) continue;
      total += d.pd[k];
      ++used;
    }
    if (used) avg[k] = total / used;
  }
  return avg;
}

SceneProportion hc_proportion(const uq::PredictiveSummary& summary, const std::string& scene,
                              const std::string& method) {
  SceneProportion p{scene, method, 0.0, 0, summary.size()};
  for (const auto& s : summary.stats) p.members += s.hc ? 1 : 0;
  p.fraction = p.pixels ? static_cast<double>(p.members) / static_cast<double>(p.pixels) : 0.0;
  return p;
}

std::vector<std::size_t> lc_histogram(const uq::PredictiveSummary& summary, bool target_only, int n_bins) {
  if (n_bins < 1) throw ConfigError("lc_histogram: n_bins must be positive");
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& s = summary.stats[i];
    if (!s.lc) continue;
    if (target_only && !(summary.abundance[i] > 0.0)) continue;
    const double m = std::clamp(s.mean, 0.0, 1.0);
    const auto bin = std::min(static_cast<std::size_t>(m * n_bins), static_cast<std::size_t>(n_bins - 1));
    ++counts[bin];
  }
  return counts;
}

uq::PredictiveSummary subset(const uq::PredictiveSummary& summary, const std::vector<bool>& mask) {
  if (mask.size() != summary.size()) throw ShapeError("subset: mask length mismatch");
  uq::PredictiveSummary out;
  for (std::size_t i = 0; i < summary.size(); ++i) {
    if (!mask[i]) continue;
    out.pixels.push_back(summary.pixels[i]);
    out.abundance.push_back(summary.abundance[i]);
    out.stats.push_back(summary.stats[i]);
  }
  return out;
}

void write_roc_csv(const std::filesystem::path& path, const RocSet& rocs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "cap,threshold,far,pd\n";
  out.precision(17);
  for (const auto& c : rocs.curves) {
    for (std::size_t k = 0; k < c.far.size(); ++k) {
      out << format_cap(c.abundance_cap) << ',' << c.thresholds[k] << ',' << c.far[k] << ',' << c.pd[k] << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_auc_rows(std::ostream& out, const std::string& scene, const std::string& method,
                    const std::string& subset_name, const RocSet& rocs) {
  for (const auto& c : rocs.curves) {
    out << scene << ',' << method << ',' << subset_name << ',' << format_cap(c.abundance_cap) << ',' << c.auc << ','
        << c.positives << ',' << c.negatives << '\n';
  }
}

}  // namespace hsbnn::eval
