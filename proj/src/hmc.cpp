#include "hsbnn/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hsbnn/parallel.hpp"
#include "hsbnn/random.hpp"

namespace hsbnn::hmc {

void HmcConfig::validate() const {
  if (chains < 1) throw ConfigError("hmc: chains must be >= 1");
  if (warmup < 0 || warmup >= iterations) throw ConfigError("hmc: need 0 <= warmup < iterations");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("hmc: target_accept must lie in (0,1)");
  if (leapfrog_steps < 1) throw ConfigError("hmc: leapfrog_steps must be >= 1");
  if (step_jitter < 0.0 || step_jitter >= 1.0) throw ConfigError("hmc: step_jitter must lie in [0,1)");
  if (!(init_sd >= 0.0)) throw ConfigError("hmc: init_sd must be nonnegative");
  if (step_size && !(*step_size > 0.0)) throw ConfigError("hmc: step_size must be positive");
}

nlohmann::json HmcConfig::to_json() const {
  nlohmann::json j{{"chains", chains},
                   {"iterations", iterations},
                   {"warmup", warmup},
                   {"target_accept", target_accept},
                   {"leapfrog_steps", leapfrog_steps},
                   {"step_jitter", step_jitter},
                   {"init_sd", init_sd},
                   {"max_divergent_fraction", max_divergent_fraction},
                   {"seed", seed},
                   {"mass_matrix", "identity"},
                   {"adaptation", {{"gamma", 0.05}, {"t0", 10.0}, {"kappa", 0.75}}}};
  if (step_size) j["step_size"] = *step_size;
  return j;
}

DualAveraging::DualAveraging(double initial_step, double target, double gamma, double t0, double kappa)
    : mu_(std::log(10.0 * initial_step)), target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

double DualAveraging::update(double accept_prob) {
  ++m_;
  const double m = m_;
  const double eta = 1.0 / (m + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
  const double log_eps = mu_ - std::sqrt(m) / gamma_ * h_bar_;
  const double x = std::pow(m, -kappa_);
  log_eps_bar_ = x * log_eps + (1.0 - x) * log_eps_bar_;
  return std::exp(log_eps);
}

double DualAveraging::final_step() const { return std::exp(log_eps_bar_); }

std::vector<int> adaptation_restarts(int warmup) {
  if (warmup < 20) return {};
  if (warmup < 150) return {static_cast<int>(0.15 * warmup)};
  std::vector<int> ends{75};
  for (int start = 75, window = 25;; window *= 2) {
    const int end = start + window;
    // the window that would not fit is merged into the final one
    if (end + 2 * window > warmup) break;
    ends.push_back(end);
    start = end;
  }
  return ends;
}

LeapfrogState leapfrog(const LeapfrogState& start, double epsilon, int steps, const LogDensity& f) {
  if (!(epsilon > 0.0)) throw ConfigError("leapfrog: epsilon must be positive");
  if (steps < 1) throw ConfigError("leapfrog: steps must be >= 1");
  LeapfrogState s = start;
  s.divergent = false;
  s.momentum += 0.5 * epsilon * s.grad;
  for (int l = 0; l < steps; ++l) {
    s.theta += epsilon * s.momentum;
    try {
      s.log_density = f(s.theta, s.grad);
    } catch (const NumericalError&) {
      s.divergent = true;
      return s;
    }
    if (!std::isfinite(s.log_density) || !s.grad.allFinite()) {
      s.divergent = true;
      return s;
    }
    s.momentum += (l + 1 == steps ? 0.5 : 1.0) * epsilon * s.grad;
  }
  if (!s.theta.allFinite() || !s.momentum.allFinite()) s.divergent = true;
  return s;
}

LeapfrogState leapfrog(const Eigen::VectorXd& theta, const Eigen::VectorXd& momentum,
                       double epsilon, int steps, const LogDensity& f) {
  if (theta.size() != momentum.size()) throw ShapeError("leapfrog: theta and momentum sizes differ");
  LeapfrogState s;
  s.theta = theta;
  s.momentum = momentum;
  s.log_density = f(s.theta, s.grad);
  return leapfrog(s, epsilon, steps, f);
}

double hamiltonian(const LeapfrogState& s) {
  return -s.log_density + 0.5 * s.momentum.squaredNorm();
}

namespace {

struct ChainResult {
  Eigen::MatrixXd draws;
  double accept_rate = 0.0;
  double step_size = 0.0;
  int divergences = 0;
};

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
  return v;
}

double accept_probability(const LeapfrogState& from, const LeapfrogState& to, double threshold,
                          bool& divergent) {
  if (to.divergent) {
    divergent = true;
    return 0.0;
  }
  const double delta = hamiltonian(to) - hamiltonian(from);
  if (!std::isfinite(delta) || delta > threshold) {
    divergent = true;
    return 0.0;
  }
  divergent = false;
  return std::min(1.0, std::exp(-delta));
}

// Doubling/halving search for a step size whose one-step acceptance is near 1/2.
double initial_step_size(const LeapfrogState& current, const LogDensity& f, Rng& rng) {
  double eps = 1.0;
  auto one_step_ratio = [&](double e) {
    LeapfrogState s = current;
    s.momentum = standard_normal(current.theta.size(), rng);
    const auto next = leapfrog(s, e, 1, f);
    bool divergent = false;
    const double p = accept_probability(s, next, std::numeric_limits<double>::infinity(), divergent);
    return divergent ? 0.0 : p;
  };
  double ratio = one_step_ratio(eps);
  const double direction = ratio > 0.5 ? 1.0 : -1.0;
  for (int i = 0; i < 100; ++i) {
    if (direction > 0 ? ratio <= 0.5 : ratio >= 0.5) break;
    eps *= std::pow(2.0, direction);
    ratio = one_step_ratio(eps);
  }
  return eps;
}

ChainResult run_chain(const LogDensity& f, const Eigen::VectorXd& init, const HmcConfig& cfg, int chain) {
  auto rng = make_rng(cfg.seed, {hash_tag("hmc-chain"), static_cast<std::uint64_t>(chain)});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int lo = std::max(1, static_cast<int>(std::floor(cfg.leapfrog_steps * (1.0 - cfg.step_jitter))));
  const int hi = std::max(lo, static_cast<int>(std::ceil(cfg.leapfrog_steps * (1.0 - 1e-12 + cfg.step_jitter))));
  std::uniform_int_distribution<int> steps_dist(lo, hi);

  LeapfrogState current;
  current.theta = init;
  current.log_density = f(current.theta, current.grad);
  if (!std::isfinite(current.log_density) || !current.grad.allFinite()) {
    throw NumericalError("hmc: log density not finite at the initial point of chain " + std::to_string(chain));
  }

  double eps = cfg.step_size ? *cfg.step_size : initial_step_size(current, f, rng);
  DualAveraging adapt(eps, cfg.target_accept);
  const auto restarts = adaptation_restarts(cfg.warmup);
  auto next_restart = restarts.begin();

  ChainResult out;
  out.draws.resize(cfg.kept(), init.size());
  int warmup_divergent = 0;
  double accept_sum = 0.0;

  for (int it = 0; it < cfg.iterations; ++it) {
    const bool warm = it < cfg.warmup;
    current.momentum = standard_normal(init.size(), rng);
    const int steps = steps_dist(rng);
    const auto proposal = leapfrog(current, eps, steps, f);
    bool divergent = false;
    const double alpha = accept_probability(current, proposal, cfg.divergence_threshold, divergent);
    if (unif(rng) < alpha) {
      current.theta = proposal.theta;
      current.grad = proposal.grad;
      current.log_density = proposal.log_density;
    }
    if (warm) {
      warmup_divergent += divergent ? 1 : 0;
      eps = adapt.update(alpha);
      if (it + 1 == cfg.warmup) {
        if (warmup_divergent > cfg.max_divergent_fraction * cfg.warmup) {
          throw AdaptationError("hmc: chain " + std::to_string(chain) + " had " +
                                    std::to_string(warmup_divergent) + " divergent proposals in " +
                                    std::to_string(cfg.warmup) + " warmup iterations (step size " +
                                    std::to_string(eps) + ")",
                                chain, warmup_divergent, cfg.warmup, eps);
        }
        eps = adapt.final_step();
      } else if (next_restart != restarts.end() && it + 1 == *next_restart) {
        eps = adapt.final_step();
        adapt = DualAveraging(eps, cfg.target_accept);
        ++next_restart;
      }
    } else {
      out.draws.row(it - cfg.warmup) = current.theta.transpose();
      accept_sum += alpha;
      out.divergences += divergent ? 1 : 0;
    }
  }
  out.accept_rate = accept_sum / cfg.kept();
  out.step_size = eps;
  return out;
}

}  // namespace

PosteriorSamples sample(const LogDensity& log_density, Eigen::Index dim, const HmcConfig& config) {
  config.validate();
  if (dim < 1) throw ConfigError("hmc: dimension must be positive");
  std::vector<Eigen::VectorXd> inits;
  for (int c = 0; c < config.chains; ++c) {
    auto rng = make_rng(config.seed, {hash_tag("hmc-init"), static_cast<std::uint64_t>(c)});
    inits.push_back(config.init_sd * standard_normal(dim, rng));
  }
  return sample(log_density, inits, config);
}

PosteriorSamples sample(const LogDensity& log_density, const std::vector<Eigen::VectorXd>& inits,
                        const HmcConfig& config) {
  config.validate();
  if (static_cast<int>(inits.size()) != config.chains) {
    throw ConfigError("hmc: need one initial point per chain");
  }
  const auto dim = inits.front().size();
  std::vector<ChainResult> results(inits.size());
  parallel_for(inits.size(), resolve_threads(config.threads), [&](std::size_t c) {
    if (inits[c].size() != dim) throw ShapeError("hmc: initial points differ in dimension");
    results[c] = run_chain(log_density, inits[c], config, static_cast<int>(c));
  });

  PosteriorSamples out;
  out.method = Method::Mcmc;
  out.config = config.to_json();
  out.draws.resize(static_cast<Eigen::Index>(config.chains) * config.kept(), dim);
  for (std::size_t c = 0; c < results.size(); ++c) {
    out.draws.middleRows(static_cast<Eigen::Index>(c) * config.kept(), config.kept()) = results[c].draws;
    out.chain_id.insert(out.chain_id.end(), static_cast<std::size_t>(config.kept()), static_cast<int>(c));
    out.accept_rate.push_back(results[c].accept_rate);
    out.step_size.push_back(results[c].step_size);
    out.divergences.push_back(results[c].divergences);
  }
  return out;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("split_rhat: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw ShapeError("split_rhat: chains differ in length");
  }
  const std::size_t half = n / 2;
  if (half < 2) throw DataError("split_rhat: chains too short to split");

  std::vector<double> means, vars;
  for (const auto& c : chains) {
    for (std::size_t start : {std::size_t{0}, n - half}) {
      double mean = 0.0;
      for (std::size_t i = 0; i < half; ++i) mean += c[start + i];
      mean /= static_cast<double>(half);
      double ss = 0.0;
      for (std::size_t i = 0; i < half; ++i) ss += (c[start + i] - mean) * (c[start + i] - mean);
      means.push_back(mean);
      vars.push_back(ss / static_cast<double>(half - 1));
    }
  }
  const double m = static_cast<double>(means.size());
  const double len = static_cast<double>(half);
  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= m;
  double between = 0.0;  // B / n
  for (double v : means) between += (v - grand) * (v - grand);
  between /= (m - 1.0);
  double within = 0.0;
  for (double v : vars) within += v;
  within /= m;
  if (within <= 0.0) return between <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (len - 1.0) / len * within + between;
  return std::sqrt(var_plus / within);
}

std::vector<bool> RhatReport::flagged() const {
  std::vector<bool> f;
  for (double r : rhat) f.push_back(!(r <= threshold));
  return f;
}

double RhatReport::max() const {
  double m = 0.0;
  for (double r : rhat) m = std::max(m, r);
  return m;
}

RhatReport rhat_on_predictions(const PosteriorSamples& samples, const bnn::Model& model,
                               const Eigen::MatrixXd& probe_x, double threshold) {
  const int chains = samples.num_chains();
  if (chains < 2) throw ConfigError("R-hat on predictions needs at least 2 chains");
  if (!samples.layer_sizes.empty() && samples.layer_sizes != model.architecture().layer_sizes) {
    throw ConfigError("posterior samples were drawn for a different architecture");
  }
  const auto m = probe_x.rows();
  // preds(s, i) = pi_i(theta_s)
  Eigen::MatrixXd preds(samples.num_draws(), m);
  for (Eigen::Index s = 0; s < samples.num_draws(); ++s) {
    preds.row(s) = model.forward_batch(samples.draws.row(s).transpose(), probe_x).transpose();
  }
  RhatReport report;
  report.threshold = threshold;
  std::vector<std::vector<Eigen::Index>> rows;
  for (int c = 0; c < chains; ++c) rows.push_back(samples.rows_of_chain(c));
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<std::vector<double>> traces;
    for (const auto& r : rows) {
      std::vector<double> t;
      t.reserve(r.size());
      for (auto s : r) t.push_back(preds(s, i));
      traces.push_back(std::move(t));
    }
    report.probe_ids.push_back(i);
    report.rhat.push_back(split_rhat(traces));
  }
  return report;
}

}  // namespace hsbnn::hmc
