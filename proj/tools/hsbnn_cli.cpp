// hsbnn command-line driver. Each verb runs one pipeline stage (or all of
// them) against an output directory.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hsbnn/error.hpp"
#include "hsbnn/pipeline.hpp"

namespace {

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--seed", opts.seed, "master seed (overrides the config file)");
  cmd->add_option("--config", opts.config, "INI-style run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "output directory (overrides the config file)");
}

hsbnn::pipeline::RunConfig resolve(const CommonOptions& opts) {
  auto config = opts.config.empty() ? hsbnn::pipeline::RunConfig{} : hsbnn::pipeline::load_config(opts.config);
  if (opts.seed) config.seed = *opts.seed;
  if (!opts.out.empty()) config.out_dir = opts.out;
  config.validate();
  return config;
}

void print_timings(const hsbnn::pipeline::RunManifest& m) {
  for (const auto& [stage, secs] : m.timings) std::cout << "  " << stage << ": " << secs << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral sub-pixel target detection with Bayesian neural networks"};
  app.set_version_flag("--version", std::string(hsbnn::pipeline::version()));
  app.require_subcommand(1);

  CommonOptions opts;
  const std::pair<const char*, const char*> verbs[] = {
      {"simulate", "synthesize the scene cubes and endmember library"},
      {"featurize", "fit fPCA on the training half and write feature tables"},
      {"train", "train the network with HMC and/or VI"},
      {"predict", "posterior predictive summaries for every test half"},
      {"evaluate", "ROC, Pd at fixed FAR, HC proportions and LC histograms"},
      {"report", "export heat-map rasters"},
      {"run-all", "run every stage in order"}};
  for (const auto& [name, help] : verbs) add_common(app.add_subcommand(name, help), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto config = resolve(opts);
    const std::string verb = app.get_subcommands().front()->get_name();
    const auto manifest = verb == "run-all" ? hsbnn::pipeline::run_pipeline(config)
                                            : hsbnn::pipeline::run_stage(config, verb);
    std::cout << verb << " finished in " << config.out_dir.string() << '\n';
    print_timings(manifest);
    return 0;
  } catch (const hsbnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code() == 1 ? 3 : e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
