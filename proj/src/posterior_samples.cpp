#include "hsbnn/posterior_samples.hpp"

#include <algorithm>
#include <string>

#include "hsbnn/container.hpp"
#include "hsbnn/error.hpp"

namespace hsbnn {

std::string_view to_string(Method m) { return m == Method::Mcmc ? "MCMC" : "VI"; }

Method parse_method(std::string_view s) {
  if (s == "MCMC" || s == "mcmc") return Method::Mcmc;
  if (s == "VI" || s == "vi") return Method::Vi;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected mcmc or vi)");
}

int PosteriorSamples::num_chains() const {
  if (chain_id.empty()) return 0;
  return *std::max_element(chain_id.begin(), chain_id.end()) + 1;
}

std::vector<Eigen::Index> PosteriorSamples::rows_of_chain(int chain) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < chain_id.size(); ++i) {
    if (chain_id[i] == chain) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

void PosteriorSamples::validate() const {
  if (static_cast<std::size_t>(draws.rows()) != chain_id.size()) {
    throw ShapeError("posterior samples: chain ids do not match draw count");
  }
  if (!draws.allFinite()) throw DataError("posterior samples contain non-finite draws");
  if (!std::is_sorted(chain_id.begin(), chain_id.end())) {
    throw DataError("posterior samples must be stored chain-major");
  }
}

void write_posterior(const std::filesystem::path& path, const PosteriorSamples& samples) {
  samples.validate();
  json chains = json::array();
  for (int c = 0; c < samples.num_chains(); ++c) {
    const auto idx = static_cast<std::size_t>(c);
    chains.push_back({{"id", c},
                      {"draws", samples.rows_of_chain(c).size()},
                      {"accept_rate", idx < samples.accept_rate.size() ? samples.accept_rate[idx] : 0.0},
                      {"step_size", idx < samples.step_size.size() ? samples.step_size[idx] : 0.0},
                      {"divergences", idx < samples.divergences.size() ? samples.divergences[idx] : 0}});
  }
  json header{{"format", "post"},
              {"version", 1},
              {"method", std::string(to_string(samples.method))},
              {"J", samples.dim()},
              {"S", samples.num_draws()},
              {"architecture", samples.layer_sizes},
              {"config", samples.config},
              {"chains", chains},
              {"dtype", "float64"},
              {"byte_order", "little"},
              {"layout", "row-major S x J, chain-major"}};
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = samples.draws;
  std::vector<std::byte> payload;
  append_payload(payload, std::span<const double>(rows.data(), rows.size()));
  write_container(path, std::move(header), payload);
}

PosteriorSamples read_posterior(const std::filesystem::path& path) {
  auto c = read_container(path);
  const auto& h = c.header;
  if (h.value("format", "") != "post") throw IoError(path.string() + " is not a posterior sample file");
  PosteriorSamples s;
  Eigen::Index rows = 0, cols = 0;
  try {
    s.method = parse_method(h.at("method").get<std::string>());
    rows = h.at("S").get<Eigen::Index>();
    cols = h.at("J").get<Eigen::Index>();
    s.layer_sizes = h.at("architecture").get<std::vector<int>>();
    s.config = h.at("config");
    for (const auto& ch : h.at("chains")) {
      const int id = ch.at("id").get<int>();
      const auto n = ch.at("draws").get<std::size_t>();
      s.chain_id.insert(s.chain_id.end(), n, id);
      s.accept_rate.push_back(ch.at("accept_rate").get<double>());
      s.step_size.push_back(ch.at("step_size").get<double>());
      s.divergences.push_back(ch.at("divergences").get<int>());
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad posterior header: " + e.what());
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
  PayloadReader reader(c.payload);
  reader.read(std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
  if (!reader.exhausted()) throw IoError(path.string() + ": trailing payload bytes");
  s.draws = m;
  s.validate();
  return s;
}

}  // namespace hsbnn
