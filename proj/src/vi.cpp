#include "hsbnn/vi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "hsbnn/container.hpp"
#include "hsbnn/error.hpp"
#include "hsbnn/random.hpp"

namespace hsbnn::vi {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double logistic(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // fill row by row so the stream order does not depend on storage order
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = z(rng);
  }
  return m;
}

}  // namespace

double softplus(double x) noexcept {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ConfigError("softplus_inverse: argument must be positive");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

Eigen::VectorXd VariationalParams::sd() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

Eigen::VectorXd VariationalParams::transform(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  return mu + sd().cwiseProduct(z);
}

void ViConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("vi: learning_rate must be positive");
  if (epochs < 1) throw ConfigError("vi: epochs must be >= 1");
  if (mc_samples_per_step < 1) throw ConfigError("vi: mc_samples_per_step must be >= 1");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw ConfigError("vi: validation_fraction must lie in [0,1)");
  }
  if (!(init_sd > 0.0) || init_mu_sd < 0.0) throw ConfigError("vi: invalid initialisation scales");
}

nlohmann::json ViConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"epochs", epochs},
          {"mc_samples_per_step", mc_samples_per_step},
          {"validation_fraction", validation_fraction},
          {"init_mu_sd", init_mu_sd},
          {"init_sd", init_sd},
          {"optimizer", {{"name", "adam"}, {"beta1", beta1}, {"beta2", beta2}, {"eps", adam_eps}}},
          {"sd_link", "softplus"},
          {"seed", seed}};
}

double log_q(const VariationalParams& vp, const Eigen::Ref<const Eigen::VectorXd>& z) {
  const Eigen::VectorXd sd = vp.sd();
  return -static_cast<double>(vp.dim()) * kHalfLog2Pi - sd.array().log().sum() - 0.5 * z.squaredNorm();
}

double elbo_estimate(const VariationalParams& vp, const LogDensity& log_joint, const Eigen::MatrixXd& noise) {
  if (noise.rows() < 1) throw ConfigError("elbo_estimate: need at least one noise draw");
  if (noise.cols() != vp.dim()) throw ShapeError("elbo_estimate: noise has the wrong dimension");
  Eigen::VectorXd grad;
  double total = 0.0;
  for (Eigen::Index s = 0; s < noise.rows(); ++s) {
    const Eigen::VectorXd z = noise.row(s).transpose();
    total += log_joint(vp.transform(z), grad) - log_q(vp, z);
  }
  return total / static_cast<double>(noise.rows());
}

double elbo_and_grad(const VariationalParams& vp, const LogDensity& log_joint,
                     const Eigen::MatrixXd& noise, Eigen::VectorXd& grad_mu, Eigen::VectorXd& grad_rho) {
  if (noise.rows() < 1) throw ConfigError("elbo_and_grad: need at least one noise draw");
  if (noise.cols() != vp.dim()) throw ShapeError("elbo_and_grad: noise has the wrong dimension");
  const Eigen::VectorXd sd = vp.sd();
  const Eigen::VectorXd dsd = vp.rho.unaryExpr([](double r) { return logistic(r); });
  grad_mu.setZero(vp.dim());
  grad_rho.setZero(vp.dim());
  Eigen::VectorXd g;
  double total = 0.0;
  for (Eigen::Index s = 0; s < noise.rows(); ++s) {
    const Eigen::VectorXd z = noise.row(s).transpose();
    const Eigen::VectorXd theta = vp.mu + sd.cwiseProduct(z);
    total += log_joint(theta, g) - log_q(vp, z);
    grad_mu += g;
    // d/d rho of [log p(mu + sd z) + sum log sd]
    grad_rho += (g.cwiseProduct(z) + sd.cwiseInverse()).cwiseProduct(dsd);
  }
  const double inv = 1.0 / static_cast<double>(noise.rows());
  grad_mu *= inv;
  grad_rho *= inv;
  return total * inv;
}

ViFit fit_vi(const LogDensity& train, const LogDensityValue* validation, Eigen::Index dim,
             const ViConfig& config) {
  config.validate();
  if (dim < 1) throw ConfigError("fit_vi: dimension must be positive");
  auto rng = make_rng(config.seed, {hash_tag("vi-fit")});

  ViFit fit;
  auto& vp = fit.params;
  vp.mu = config.init_mu_sd * normal_matrix(dim, 1, rng).col(0);
  vp.rho = Eigen::VectorXd::Constant(dim, softplus_inverse(config.init_sd));

  Eigen::VectorXd m_mu = Eigen::VectorXd::Zero(dim), v_mu = m_mu;
  Eigen::VectorXd m_rho = m_mu, v_rho = m_mu;
  Eigen::VectorXd g_mu, g_rho;
  double b1t = 1.0, b2t = 1.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Eigen::MatrixXd noise = normal_matrix(config.mc_samples_per_step, dim, rng);
    double elbo = 0.0;
    try {
      elbo = elbo_and_grad(vp, train, noise, g_mu, g_rho);
    } catch (const NumericalError& e) {
      throw NumericalError("vi diverged at epoch " + std::to_string(epoch) + " (learning rate " +
                           std::to_string(config.learning_rate) + "): " + e.what());
    }
    if (!std::isfinite(elbo) || !g_mu.allFinite() || !g_rho.allFinite()) {
      throw NumericalError("vi diverged at epoch " + std::to_string(epoch) + " (learning rate " +
                           std::to_string(config.learning_rate) + "): non-finite loss");
    }
    fit.train_loss.push_back(-elbo);
    if (validation) {
      double val = 0.0;
      for (Eigen::Index s = 0; s < noise.rows(); ++s) {
        const Eigen::VectorXd z = noise.row(s).transpose();
        val += (*validation)(vp.transform(z)) - log_q(vp, z);
      }
      fit.validation_loss.push_back(-val / static_cast<double>(noise.rows()));
    }

    // Adam on the loss -ELBO, whose gradient is -g
    b1t *= config.beta1;
    b2t *= config.beta2;
    auto adam = [&](Eigen::VectorXd& param, const Eigen::VectorXd& ascent, Eigen::VectorXd& m,
                    Eigen::VectorXd& v) {
      m = config.beta1 * m - (1.0 - config.beta1) * ascent;
      v = config.beta2 * v + (1.0 - config.beta2) * ascent.cwiseAbs2();
      const Eigen::ArrayXd mhat = m.array() / (1.0 - b1t);
      const Eigen::ArrayXd vhat = v.array() / (1.0 - b2t);
      param.array() -= config.learning_rate * mhat / (vhat.sqrt() + config.adam_eps);
    };
    adam(vp.mu, g_mu, m_mu, v_mu);
    adam(vp.rho, g_rho, m_rho, v_rho);
  }
  return fit;
}

ViFit fit_vi(const bnn::Model& model, const bnn::LabeledBatch& batch, const ViConfig& config) {
  config.validate();
  batch.validate(model.architecture().input_dim());
  const auto n = batch.size();
  if (n < 1) throw DataError("fit_vi: empty batch");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto rng = make_rng(config.seed, {hash_tag("vi-split")});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<Eigen::Index>(std::llround(config.validation_fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n - 1);

  auto take = [&](Eigen::Index begin, Eigen::Index count) {
    std::vector<Eigen::Index> idx(order.begin() + begin, order.begin() + begin + count);
    std::sort(idx.begin(), idx.end());
    bnn::LabeledBatch b;
    b.x.resize(count, batch.x.cols());
    b.y.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      b.x.row(i) = batch.x.row(idx[static_cast<std::size_t>(i)]);
      b.y[i] = batch.y[idx[static_cast<std::size_t>(i)]];
    }
    return b;
  };
  bnn::LabeledBatch val_batch = take(0, n_val);
  bnn::LabeledBatch train_batch = take(n_val, n - n_val);

  const auto train = bnn::make_log_posterior(model, train_batch);
  if (n_val == 0) return fit_vi(train, nullptr, static_cast<Eigen::Index>(model.num_params()), config);

  const double scale = static_cast<double>(train_batch.size()) / static_cast<double>(n_val);
  LogDensityValue validation = [model, val_batch, scale](const Eigen::VectorXd& theta) {
    return scale * model.log_likelihood(theta, val_batch) + model.log_prior(theta);
  };
  return fit_vi(train, &validation, static_cast<Eigen::Index>(model.num_params()), config);
}

PosteriorSamples draw_from_vi(const VariationalParams& vp, Eigen::Index draws, std::uint64_t seed) {
  if (draws < 1) throw ConfigError("draw_from_vi: need at least one draw");
  auto rng = make_rng(seed, {hash_tag("vi-draws")});
  const Eigen::MatrixXd z = normal_matrix(draws, vp.dim(), rng);
  PosteriorSamples out;
  out.method = Method::Vi;
  out.draws = (z * vp.sd().asDiagonal()).rowwise() + vp.mu.transpose();
  out.chain_id.assign(static_cast<std::size_t>(draws), 0);
  out.accept_rate = {1.0};
  out.step_size = {0.0};
  out.divergences = {0};
  out.config = {{"draws", draws}, {"seed", seed}};
  return out;
}

void write_vparams(const std::filesystem::path& path, const VariationalParams& vp, const nlohmann::json& extra) {
  if (vp.mu.size() != vp.rho.size()) throw ShapeError("variational params: mu and rho differ in length");
  json header{{"format", "vparams"},
              {"version", 1},
              {"J", vp.dim()},
              {"sd_link", "softplus"},
              {"dtype", "float64"},
              {"byte_order", "little"},
              {"layout", "mu[J], rho[J]"}};
  if (!extra.is_null()) header["meta"] = extra;
  std::vector<std::byte> payload;
  append_payload(payload, std::span<const double>(vp.mu.data(), static_cast<std::size_t>(vp.mu.size())));
  append_payload(payload, std::span<const double>(vp.rho.data(), static_cast<std::size_t>(vp.rho.size())));
  write_container(path, std::move(header), payload);
}

VariationalParams read_vparams(const std::filesystem::path& path) {
  auto c = read_container(path);
  if (c.header.value("format", "") != "vparams") throw IoError(path.string() + " is not a vparams file");
  const auto j = c.header.value("J", std::size_t{0});
  VariationalParams vp;
  vp.mu.resize(static_cast<Eigen::Index>(j));
  vp.rho.resize(static_cast<Eigen::Index>(j));
  PayloadReader reader(c.payload);
  reader.read(std::span<double>(vp.mu.data(), j));
  reader.read(std::span<double>(vp.rho.data(), j));
  if (!reader.exhausted()) throw IoError(path.string() + ": trailing payload bytes");
  return vp;
}

}  // namespace hsbnn::vi
