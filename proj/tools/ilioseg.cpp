// ilioseg <cohort-gen|train|segment|eval|stats> [--config file] [--seed n]
//         [--workdir dir] [--scale desk|paper] [--set key=value ...]

#include <CLI11.hpp>

#include <iostream>

#include "ilioseg/cli.hpp"

int main(int argc, char** argv) {
  using namespace ilio::cli;
  CLI::App app{"Phantom cohort generation, segmentation training and cohort statistics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::string seed;
  std::string workdir;
  std::string scale;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "key = value settings file");
  app.add_option("--seed", seed, "64-bit seed");
  app.add_option("--workdir", workdir, "working directory");
  app.add_option("--scale", scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--set", sets, "override a setting, key=value");

  const char* commands[][2] = {{"cohort-gen", "generate the phantom cohort"},
                               {"train", "train the segmentation network"},
                               {"segment", "segment every subject of the cohort"},
                               {"eval", "DSC on the held-out subjects"},
                               {"stats", "cohort statistics and plots"}};
  for (const auto& c : commands) app.add_subcommand(c[0], c[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  KeyValues overrides;
  if (!scale.empty()) overrides.emplace_back("scale", scale);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "--set expects key=value, got '" << s << "'\n";
      return kExitInput;
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!seed.empty()) overrides.emplace_back("seed", seed);
  if (!workdir.empty()) overrides.emplace_back("workdir", workdir);

  RunConfig config;
  try {
    config = resolve_config(config_file, overrides);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitInput;
  }
  return run_command(app.get_subcommands().front()->get_name(), config);
}
