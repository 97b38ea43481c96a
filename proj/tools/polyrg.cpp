#include "polyrg/suites.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> suites;  // empty: taken from --suite
};

const std::vector<Command>& commands() {
  static const std::vector<Command> all = {
      {"lattice-info", "Torus and block geometry", {"lattice-info"}},
      {"green-decay", "Decay fit of the lattice Green's function gradient", {"green-decay"}},
      {"cov-scaling", "Per-scale decay of the smoothed fluctuation covariance", {"cov-scaling"}},
      {"mayer-check", "Exhaustive Mayer expansion identity", {"mayer"}},
      {"reblock-check", "Pointwise extraction and reblocking identity", {"reblock"}},
      {"cond-exp-check", "Conditional Gaussian law and variation split", {"cond-exp"}},
      {"regulator-check", "Regulator routes and integration constant", {"regulator"}},
      {"caccioppoli-check", "Caccioppoli inequality and harmonic constants", {"caccioppoli", "harmonic"}},
      {"alpha", "Quadratic coefficient extraction for the dipole activity", {"alpha"}},
      {"rg-flow", "One RG step of the couplings", {"rg-flow"}},
      {"norms-probe", "Norm estimates for e^{sigma V} and K_0 by derivative probes", {"norms-probe"}},
      {"report", "Run the suites given by --suite and emit a report", {}},
  };
  return all;
}

const std::vector<std::pair<const char*, const char*>>& flag_help() {
  static const std::vector<std::pair<const char*, const char*>> all = {
      {"dim", "Lattice dimension d (default 2)"},
      {"L", "Odd block side L (default 3)"},
      {"N", "Torus side L^N (default N=1)"},
      {"mass", "Mass of the regularized Laplacian (default 0.5)"},
      {"kappa", "Large-field weight kappa (default 0.1)"},
      {"h", "Field-norm scale h (default 10)"},
      {"A", "Polymer weight A (default 32)"},
      {"sigma0", "Initial sigma (default 1e-4)"},
      {"z", "Dipole activity z (default 1e-6)"},
      {"beta", "Inverse temperature beta (default 1)"},
      {"seed", "RNG seed (default 1)"},
      {"samples", "Monte Carlo samples or probe draws (default 1000)"},
      {"out", "Write the report to this file instead of stdout"},
      {"format", "json or csv (default json)"},
      {"parallel", "Run up to this many suites concurrently (capped by POLYRG_THREADS)"},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyrg: checks for a lattice dipole-gas renormalization group step"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", polyrg::version_string());
  app.require_subcommand(1);

  std::map<std::string, std::string> flags;
  std::vector<std::string> suite_flags;
  std::string config_path;
  std::map<std::string, CLI::App*> subs;
  std::map<std::string, std::vector<CLI::Option*>> options;

  for (const auto& cmd : commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->set_help_flag("--help", "Print this help message and exit");
    subs[cmd.name] = sub;
    sub->add_option("--config", config_path, "key=value config file; flags override it");
    for (const auto& [key, help] : flag_help())
      options[cmd.name].push_back(sub->add_option(std::string("--") + key, flags[key], help));
    options[cmd.name].push_back(
        sub->add_option("--suite", suite_flags, "Suites, modules or 'all' (comma separated or repeated)"));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const Command* cmd = nullptr;
  for (const auto& c : commands())
    if (subs[c.name]->parsed()) cmd = &c;

  polyrg::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = polyrg::read_config_file(config_path, cfg);
    for (auto* opt : options[cmd->name]) {
      if (opt->count() == 0) continue;
      std::string key = opt->get_name().substr(2);
      if (key == "suite") {
        std::string joined;
        for (const auto& s : suite_flags) joined += (joined.empty() ? "" : ",") + s;
        polyrg::set_config_value(cfg, "suite", joined);
      } else {
        polyrg::set_config_value(cfg, key, flags[key]);
      }
    }
    if (!cmd->suites.empty()) cfg.suites = cmd->suites;
    polyrg::validate(cfg);
    polyrg::resolve_suites(cfg.suites);
  } catch (const std::exception& e) {
    std::cerr << "polyrg: " << e.what() << "\n";
    return 2;
  }

  polyrg::ReportDocument doc;
  doc.config = cfg;
  try {
    doc.reports = polyrg::run_suites(cfg);
  } catch (const polyrg::ConfigError& e) {
    std::cerr << "polyrg: " << e.what() << "\n";
    return 2;
  }

  const std::string text = cfg.format == "csv" ? polyrg::to_csv(doc) : polyrg::to_json(doc);
  if (cfg.out.empty()) {
    std::cout << text;
  } else {
    try {
      polyrg::write_text(cfg.out, text);
    } catch (const std::exception& e) {
      std::cerr << "polyrg: " << e.what() << "\n";
      return 2;
    }
    for (const auto& r : doc.reports)
      std::cout << polyrg::status_name(r.status) << " " << r.suite << "/" << r.check
                << (r.message.empty() ? "" : " (" + r.message + ")") << "\n";
  }
  return polyrg::all_pass(doc.reports) ? 0 : 1;
}
