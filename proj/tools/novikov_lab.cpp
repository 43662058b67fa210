// Scenario runner: evolve, singular, metric, validate.

#include <CLI11.hpp>

#include "novikov/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for the two-component Novikov system"};
  app.require_subcommand(1);

  std::string config_path, out_dir, fault;
  unsigned long long seed = 0;
  bool quick = false;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "scenario file (key = value)");
    if (config_required) opt->required();
    sub->add_option("--out", out_dir, "output directory, overrides output.dir");
    sub->add_option("--seed", seed, "seed for randomized trials, overrides seed");
    sub->add_flag("--quick", quick, "reduced resolution");
    sub->add_option("--inject-fault", fault)->group("");
  };
  auto* evolve = app.add_subcommand("evolve", "evolve and export trajectories");
  auto* singular = app.add_subcommand("singular", "detect and analyse singular points");
  auto* metric = app.add_subcommand("metric", "Lipschitz experiment for the distance bound");
  auto* validate = app.add_subcommand("validate", "run the property suite");
  add_common(evolve, true);
  add_common(singular, true);
  add_common(metric, true);
  add_common(validate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : novikov::exit_config;
  }

  novikov::RunOptions ro;
  if (!out_dir.empty()) ro.out_dir = out_dir;
  if (app.got_subcommand(evolve) ? evolve->count("--seed")
      : app.got_subcommand(singular) ? singular->count("--seed")
      : app.got_subcommand(metric) ? metric->count("--seed")
      : validate->count("--seed"))
    ro.seed = seed;
  ro.quick = quick;
  ro.inject_fault = fault;

  novikov::ScenarioConfig config;
  if (!config_path.empty()) {
    try {
      config = novikov::load_config(config_path);
    } catch (const novikov::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return novikov::exit_config;
    }
  }

  if (app.got_subcommand(evolve)) return novikov::run_evolve(config, ro);
  if (app.got_subcommand(singular)) return novikov::run_singular(config, ro);
  if (app.got_subcommand(metric)) return novikov::run_metric(config, ro);
  return novikov::run_validate(config, ro);
}
