#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hsbnn/error.hpp"
#include "hsbnn/pipeline.hpp"
#include "hsbnn/random.hpp"

namespace hsbnn::pipeline {

namespace {

using boost::property_tree::ptree;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& section, const std::string& key, const std::string& text) {
  std::istringstream ss(text);
  T v{};
  ss >> v;
  if (ss.fail() || !(ss >> std::ws).eof()) {
    throw ConfigError("[" + section + "] " + key + ": cannot parse '" + text + "'");
  }
  return v;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "methods", "scenes", "train_scene", "nontarget_ratio", "components", "threads", "out"}},
      {"scene", {"height", "width", "n_discs", "radius_min", "radius_max", "occlusion_fraction", "noise_sd",
                 "supersample", "smoothness_cap", "background_concentration"}},
      {"model", {"hidden", "prior_sd", "standardize"}},
      {"hmc", {"chains", "iterations", "warmup", "target_accept", "leapfrog_steps", "step_jitter", "init_sd",
               "step_size"}},
      {"vi", {"learning_rate", "epochs", "mc_samples_per_step", "validation_fraction", "init_mu_sd", "init_sd",
              "draws"}},
      {"uq", {"lower", "upper", "alpha"}},
      {"eval", {"far_level", "bin_width", "bin_mode", "caps", "lc_bins", "probe_pixels"}}};
  return keys;
}

}  // namespace

SceneId SceneId::parse(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw ConfigError("scene name '" + name + "' is not ATM-TIME");
  return {sim::parse_atmosphere(name.substr(0, dash)), sim::parse_time(name.substr(dash + 1))};
}

std::vector<SceneId> all_scenes() {
  std::vector<SceneId> out;
  for (auto a : sim::kAtmospheres) {
    for (auto t : sim::kTimes) out.push_back({a, t});
  }
  return out;
}

bnn::Architecture RunConfig::architecture() const {
  bnn::Architecture a;
  a.layer_sizes.clear();
  a.layer_sizes.push_back(components);
  a.layer_sizes.insert(a.layer_sizes.end(), hidden.begin(), hidden.end());
  a.layer_sizes.push_back(1);
  return a;
}

sim::SceneConfig RunConfig::scene_config(const SceneId& id) const {
  sim::SceneConfig c = scene;
  c.atmosphere = id.atmosphere;
  c.time = id.time;
  // shared geometry/background across the nine scenes; noise differs per scene
  c.seed = derive_seed(seed, {hash_tag("scene")});
  return c;
}

hmc::HmcConfig RunConfig::hmc_config() const {
  auto c = hmc;
  c.seed = derive_seed(seed, {hash_tag("hmc")});
  c.threads = threads;
  return c;
}

vi::ViConfig RunConfig::vi_config() const {
  auto c = vi;
  c.seed = derive_seed(seed, {hash_tag("vi")});
  return c;
}

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, {hash_tag("training-split")}); }

std::vector<double> RunConfig::bin_edges() const {
  std::vector<double> e{0.0};
  const int bins = static_cast<int>(std::lround(1.0 / bin_width));
  for (int k = 1; k <= bins; ++k) e.push_back(std::min(1.0, k * bin_width));
  e.back() = 1.0;
  return e;
}

void RunConfig::validate() const {
  if (scenes.empty()) throw ConfigError("no test scenes configured");
  if (nontarget_ratio < 1) throw ConfigError("nontarget_ratio must be >= 1");
  if (components < 1 || static_cast<std::size_t>(components) > fpca::kMaxComponents) {
    throw ConfigError("components must lie in [1, " + std::to_string(fpca::kMaxComponents) + "]");
  }
  if (methods.empty()) throw ConfigError("no training methods configured");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  if (vi_draws < 1) throw ConfigError("vi draws must be >= 1");
  if (!(far_level > 0.0 && far_level < 1.0)) throw ConfigError("far_level must lie in (0,1)");
  if (!(bin_width > 0.0 && bin_width <= 1.0)) throw ConfigError("bin_width must lie in (0,1]");
  if (lc_bins < 1 || probe_pixels < 1) throw ConfigError("lc_bins and probe_pixels must be positive");
  if (!(prior.sd > 0.0)) throw ConfigError("prior_sd must be positive");
  scene.validate();
  if (scene.width % 2 != 0) throw ConfigError("scene width must be even so the halves match");
  hmc.validate();
  vi.validate();
  hc.validate();
  architecture().validate();
}

nlohmann::json RunConfig::to_json() const {
  std::vector<std::string> scene_names, method_names;
  for (const auto& s : scenes) scene_names.push_back(s.name());
  for (auto m : methods) method_names.emplace_back(to_string(m));
  auto scene_json = nlohmann::json{{"height", scene.height},
                                   {"width", scene.width},
                                   {"n_discs", scene.n_discs},
                                   {"radius_range", {scene.radius_min, scene.radius_max}},
                                   {"occlusion_fraction", scene.occlusion_fraction},
                                   {"noise_sd", scene.noise_sd},
                                   {"supersample", scene.supersample},
                                   {"smoothness_cap", scene.smoothness_cap},
                                   {"background_concentration", scene.background_concentration}};
  return {{"seed", seed},
          {"scenes", scene_names},
          {"train_scene", train_scene.name()},
          {"scene", scene_json},
          {"nontarget_ratio", nontarget_ratio},
          {"components", components},
          {"methods", method_names},
          {"architecture", architecture().layer_sizes},
          {"standardize", standardize},
          {"prior", {{"mean", prior.mean}, {"sd", prior.sd}}},
          {"hmc", hmc_config().to_json()},
          {"vi", vi_config().to_json()},
          {"vi_draws", vi_draws},
          {"hc", {{"lower", hc.lower}, {"upper", hc.upper}, {"alpha", hc.alpha}}},
          {"far_level", far_level},
          {"bin_width", bin_width},
          {"bin_mode", bin_mode == eval::BinMode::Binned ? "binned" : "cumulative"},
          {"caps", caps},
          {"lc_bins", lc_bins},
          {"probe_pixels", probe_pixels}};
}

RunConfig parse_config(const std::string& text) {
  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }

  RunConfig c;
  for (const auto& [section, body] : tree) {
    const auto known = known_keys().find(section);
    if (known == known_keys().end()) {
      if (body.empty()) throw ConfigError("config key '" + section + "' appears outside a section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      if (!known->second.count(key)) throw ConfigError("unknown config key [" + section + "] " + key);
      const std::string v = node.get_value<std::string>();
      auto num = [&]<typename T>(T& target) { target = parse_value<T>(section, key, v); };

      if (section == "run") {
        if (key == "seed") num(c.seed);
        else if (key == "methods") {
          c.methods.clear();
          for (const auto& m : split_list(v)) c.methods.push_back(parse_method(m));
        } else if (key == "scenes") {
          if (v != "all") {
            c.scenes.clear();
            for (const auto& s : split_list(v)) c.scenes.push_back(SceneId::parse(s));
          }
        } else if (key == "train_scene") c.train_scene = SceneId::parse(v);
        else if (key == "nontarget_ratio") num(c.nontarget_ratio);
        else if (key == "components") num(c.components);
        else if (key == "threads") num(c.threads);
        else if (key == "out") c.out_dir = v;
      } else if (section == "scene") {
        if (key == "height") num(c.scene.height);
        else if (key == "width") num(c.scene.width);
        else if (key == "n_discs") num(c.scene.n_discs);
        else if (key == "radius_min") num(c.scene.radius_min);
        else if (key == "radius_max") num(c.scene.radius_max);
        else if (key == "occlusion_fraction") num(c.scene.occlusion_fraction);
        else if (key == "noise_sd") num(c.scene.noise_sd);
        else if (key == "supersample") num(c.scene.supersample);
        else if (key == "smoothness_cap") num(c.scene.smoothness_cap);
        else if (key == "background_concentration") num(c.scene.background_concentration);
      } else if (section == "model") {
        if (key == "hidden") {
          c.hidden.clear();
          for (const auto& w : split_list(v)) c.hidden.push_back(parse_value<int>(section, key, w));
        } else if (key == "prior_sd") num(c.prior.sd);
        else if (key == "standardize") {
          if (v == "true" || v == "1") c.standardize = true;
          else if (v == "false" || v == "0") c.standardize = false;
          else throw ConfigError("[model] standardize must be true or false");
        }
      } else if (section == "hmc") {
        if (key == "chains") num(c.hmc.chains);
        else if (key == "iterations") num(c.hmc.iterations);
        else if (key == "warmup") num(c.hmc.warmup);
        else if (key == "target_accept") num(c.hmc.target_accept);
        else if (key == "leapfrog_steps") num(c.hmc.leapfrog_steps);
        else if (key == "step_jitter") num(c.hmc.step_jitter);
        else if (key == "init_sd") num(c.hmc.init_sd);
        else if (key == "step_size") c.hmc.step_size = parse_value<double>(section, key, v);
      } else if (section == "vi") {
        if (key == "learning_rate") num(c.vi.learning_rate);
        else if (key == "epochs") num(c.vi.epochs);
        else if (key == "mc_samples_per_step") num(c.vi.mc_samples_per_step);
        else if (key == "validation_fraction") num(c.vi.validation_fraction);
        else if (key == "init_mu_sd") num(c.vi.init_mu_sd);
        else if (key == "init_sd") num(c.vi.init_sd);
        else if (key == "draws") num(c.vi_draws);
      } else if (section == "uq") {
        if (key == "lower") num(c.hc.lower);
        else if (key == "upper") num(c.hc.upper);
        else if (key == "alpha") num(c.hc.alpha);
      } else if (section == "eval") {
        if (key == "far_level") num(c.far_level);
        else if (key == "bin_width") num(c.bin_width);
        else if (key == "bin_mode") {
          if (v == "binned") c.bin_mode = eval::BinMode::Binned;
          else if (v == "cumulative") c.bin_mode = eval::BinMode::Cumulative;
          else throw ConfigError("[eval] bin_mode must be binned or cumulative");
        } else if (key == "caps") {
          c.caps.clear();
          for (const auto& f : split_list(v)) c.caps.push_back(parse_value<double>(section, key, f));
        } else if (key == "lc_bins") num(c.lc_bins);
        else if (key == "probe_pixels") num(c.probe_pixels);
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace hsbnn::pipeline
