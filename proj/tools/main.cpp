#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learning to defer: data generation, training and verification"};
  app.require_subcommand(1);

  deferral::cli::Options options;
  std::uint64_t seed = 0;
  for (const char* name : {"gen-data", "train", "sweep", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", options.config_path, "JSON config file")
        ->required();
    sub->add_option("--out", options.out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--jobs", options.jobs, "worker threads");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : deferral::cli::kExitInvalidConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) options.seed = seed;
  return deferral::cli::Run(sub->get_name(), options, std::cout, std::cerr);
}
