// metroint: runs trajectory, convergence, ergodicity and rejection-rate
// experiments and writes CSV.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metroint/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Metropolis-adjusted Langevin integrators: experiment runner"};
  std::string command, experiment, config_path, seed, realizations, threads, out_path;
  std::vector<std::string> overrides;
  app.add_option("command", command, "trajectory | converge | ergodicity | reject-rate")
      ->required()
      ->check(CLI::IsMember({"trajectory", "converge", "ergodicity", "reject-rate"}));
  app.add_option("--experiment", experiment, "named preset (fig1 ... fig5, ergodicity-*, reject-*, zero)");
  app.add_option("--config", config_path, "key = value file; '#' starts a comment");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--realizations", realizations, "ensemble size");
  app.add_option("--threads", threads, "worker cap (0 = all cores); does not change results");
  app.add_option("--out", out_path, "output CSV path (default: standard output)");
  app.add_option("--set", overrides, "extra key=value parameter, repeatable");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : metroint::exit_config;
  }

  metroint::ExperimentConfig config;
  try {
    std::string file_text;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw metroint::ConfigError("cannot read config file '" + config_path + "'");
      std::ostringstream buf;
      buf << in.rdbuf();
      file_text = buf.str();
    }
    metroint::ExperimentConfig from_file;
    std::istringstream file_in(file_text);
    metroint::read_config(file_in, from_file);
    if (experiment.empty() && from_file.has("experiment")) experiment = from_file.text("experiment");
    if (!experiment.empty()) metroint::apply_preset(experiment, config);
    for (const auto& [k, v] : from_file.values()) config.set(k, v);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw metroint::ConfigError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!seed.empty()) config.set("seed", seed);
    if (!realizations.empty()) config.set("realizations", realizations);
    if (!threads.empty()) config.set("threads", threads);
    if (!out_path.empty()) config.set("out", out_path);
  } catch (const metroint::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return metroint::exit_config;
  }

  std::ostringstream csv;
  int code = metroint::exit_numeric;
  try {
    code = metroint::run_command(command, config, csv, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return metroint::exit_numeric;
  }
  if (code != metroint::exit_ok) return code;
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << csv.str();
    if (!out) {
      std::cerr << "cannot write '" << out_path << "'\n";
      return metroint::exit_config;
    }
  }
  return metroint::exit_ok;
}
