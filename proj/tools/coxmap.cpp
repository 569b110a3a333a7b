#include <CLI11.hpp>
#include <cstdio>

#include "coxmap/cli.hpp"
#include "coxmap/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian log-Gaussian Cox process mapping"};
  app.require_subcommand(1);

  coxmap::RunConfig config;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", config.out_dir, "output directory")->required();
    cmd->add_option("--config", config.config_path, "JSON configuration file");
    cmd->add_option("--seed", config.seed, "random seed")
        ->each([&](const std::string&) { config.has_seed = true; });
    cmd->add_option("--threads", config.threads, "worker thread cap (default: all cores)");
    cmd->add_flag("--force", config.force, "overwrite existing output files");
  };
  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--pixels", config.pixels_path, "pixel CSV");
    cmd->add_option("--adjacency", config.adjacency_path, "areal-unit adjacency CSV");
    cmd->add_option("--preset", config.preset, "model preset: mod1|mod2|mod2b|mod3");
    cmd->add_option("--estimator", config.estimator,
                    "intensity estimator: lognormal-corrected|plug-in-mean");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit a model and emit surfaces");
  add_common(fit);
  add_model(fit);

  CLI::App* predict = app.add_subcommand("predict", "surfaces from a saved fit");
  add_common(predict);
  predict->add_option("--fit", config.fit_path, "fit.json from a previous fit")->required();
  predict->add_option("--estimator", config.estimator,
                      "intensity estimator: lognormal-corrected|plug-in-mean");

  CLI::App* cv = app.add_subcommand("cv", "4-fold areal-unit-blocked cross-validation");
  add_common(cv);
  add_model(cv);

  CLI::App* simulate = app.add_subcommand("simulate", "draw a synthetic dataset");
  add_common(simulate);
  simulate->add_option("--preset", config.preset, "model preset for the generative model");

  CLI11_PARSE(app, argc, argv);
  config.subcommand = app.get_subcommands().front()->get_name();

  try {
    coxmap::run(config);
  } catch (const coxmap::Error& e) {
    std::fprintf(stderr, "COXMAP_ERROR %s: %s\n", e.code().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "COXMAP_ERROR E_INTERNAL: %s\n", e.what());
    return 2;
  }
  return 0;
}
