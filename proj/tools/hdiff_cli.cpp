// hdiff: simulate hidden periodic diffusions and estimate their drift and
// diffusion with the particle filter and the modified Baum-Welch fit.
//
// Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical failure.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdiff/errors.hpp"
#include "hdiff/experiment.hpp"

namespace {

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

/// Turns leftover `--key value` / `--key=value` arguments into overrides.
hdiff::KeyValues parse_overrides(const std::vector<std::string>& extras) {
  hdiff::KeyValues kv;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) {
      throw hdiff::ConfigError("unexpected argument '" + arg + "'");
    }
    const std::string body = arg.substr(2);
    if (const auto eq = body.find('='); eq != std::string::npos) {
      kv.set(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      kv.set(body, extras[++i]);
    } else {
      throw hdiff::ConfigError("missing value for '" + arg + "'");
    }
  }
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parameter estimation for hidden diffusions in periodic potentials"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string trajectory;
  std::string seed;

  std::ostringstream keys;
  keys << "Every configuration key is also accepted as --key value. Keys and defaults:\n";
  hdiff::ExperimentConfig{}.write(keys);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key=value configuration file");
    sub->add_option("--seed", seed, "master random seed");
    sub->add_option("--out-dir", out_dir, "directory for output files");
    sub->allow_extras();
    sub->footer(keys.str());
  };

  auto* simulate = app.add_subcommand("simulate", "generate a trajectory CSV (t,x,y)");
  auto* pf = app.add_subcommand("pf", "run the particle filter on a trajectory");
  auto* mbw = app.add_subcommand("mbw", "run the modified Baum-Welch fit on a trajectory");
  auto* bench = app.add_subcommand("bench", "tabulate particle-filter divergence over repeated runs");
  for (auto* sub : {simulate, pf, mbw, bench}) add_common(sub);
  for (auto* sub : {pf, mbw}) {
    sub->add_option("--trajectory", trajectory, "input trajectory CSV; simulated from the config when omitted");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    hdiff::KeyValues kv;
    if (!config_path.empty()) kv = hdiff::KeyValues::load(config_path);
    kv.merge(parse_overrides(active->remaining()));
    if (!seed.empty()) kv.set("seed", seed);
    const auto config = hdiff::ExperimentConfig::from_key_values(kv);

    if (active == simulate) {
      hdiff::cmd_simulate(config, out_dir, std::cout);
    } else if (active == pf) {
      hdiff::cmd_pf(config, trajectory, out_dir, std::cout);
    } else if (active == mbw) {
      hdiff::cmd_mbw(config, trajectory, out_dir, std::cout);
    } else {
      hdiff::cmd_bench(config, out_dir, std::cout);
    }
  } catch (const hdiff::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const hdiff::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const hdiff::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
