#include "w2r_cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr const char* kCommands[] = {"generate", "fit", "distance", "map", "oracle", "sinkhorn", "benchmark"};

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw w2r::cli::ConfigError("--set expects key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  using namespace w2r::cli;

  CLI::App app{"Restricted 2-Wasserstein distances and transport maps from samples"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool symmetric = false;
  std::vector<std::string> sets;
  bool print_defaults = false;

  for (const char* name : kCommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file (flat keys; see --print-defaults)");
    sub->add_option("--seed", seed, "Seed for data generation and training");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--set", sets, "Override one config key: key=<json value>")->take_all();
    sub->add_flag("--print-defaults", print_defaults, "Print every config key with its default and exit");
    if (std::string_view(name) == "distance")
      sub->add_flag("--symmetric", symmetric, "Fit both directions and report their sum");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (print_defaults) {
    std::cout << default_config_json() << '\n';
    return 0;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) overrides.push_back(split_assignment(s));
    const ExperimentConfig config = resolve_config(
        config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path), overrides,
        sub->count("--seed") ? std::optional<std::uint64_t>(seed) : std::nullopt,
        out_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(out_dir));

    if (command == "generate") return cmd_generate(config, std::cout);
    if (command == "fit") return cmd_fit(config, std::cout);
    if (command == "distance") return cmd_distance(config, symmetric, std::cout);
    if (command == "map") return cmd_map(config, std::cout);
    if (command == "oracle") return cmd_oracle(config, std::cout);
    if (command == "sinkhorn") return cmd_sinkhorn(config, std::cout);
    return cmd_benchmark(config, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "w2restrict " << command << ": config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "w2restrict " << command << ": " << e.what() << '\n';
    return 1;
  }
}
