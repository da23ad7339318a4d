// Command-line front end: one verb per experiment kind.
#include <CLI11.hpp>
#include <iostream>

#include "mcf/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mean curvature flow lab"};
  app.require_subcommand(0, 1);
  bool list = false;
  app.add_flag("--list-anchors", list, "print the identity -> formula table");

  std::string config, out;
  const char* verbs[] = {"simulate", "identities", "diff-system", "symmetry", "convergence"};
  for (const char* v : verbs) {
    auto* sub = app.add_subcommand(v, std::string("run a ") + v + " experiment");
    sub->add_option("--config", config, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (list) {
    for (const auto& [name, formula] : mcf::anchor_table()) std::cout << name << '\t' << formula << '\n';
    if (app.get_subcommands().empty()) return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  mcf::ExperimentConfig cfg;
  try {
    cfg = mcf::load_config(config);
  } catch (const mcf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (mcf::to_string(cfg.kind) != verb) {
    std::cerr << "config error: experiment: config describes '" << mcf::to_string(cfg.kind) << "' but the verb is '"
              << verb << "'\n";
    return 2;
  }

  const mcf::RunResult r = mcf::run_experiment(cfg, out);
  for (const auto& line : r.summary) std::cout << line << '\n';
  for (const auto& f : r.failures) std::cerr << "FAIL " << f << '\n';
  std::cout << verb << (r.exit_code == 0 ? " ok" : " failed") << " (exit " << r.exit_code << "), reports in " << out
            << '\n';
  return r.exit_code;
}
