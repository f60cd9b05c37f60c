#include <specnet/commands.h>
#include <specnet/config.h>

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char **argv) {
  CLI::App app{"Neural-network and finite-volume eigenpairs of Langevin generators"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--config", config_path, "JSON experiment config")->required();
    cmd->add_option("--output", output, "output directory (overrides config)");
    cmd->add_option("--seed", seed, "seed for sampling, training and eval");
  };
  auto *sample = app.add_subcommand("sample", "generate Euler-Maruyama training data");
  auto *fvm = app.add_subcommand("fvm", "finite-volume reference eigenpairs");
  auto *train = app.add_subcommand("train", "train eigenfunction networks");
  auto *eval = app.add_subcommand("eval", "evaluate trained networks");
  for (auto *cmd : {sample, fvm, train, eval})
    add_common(cmd);

  std::string align_input, align_reference, align_output = ".";
  auto *align = app.add_subcommand("align", "rigidly align a configuration to a reference");
  align->add_option("--input", align_input, "configuration CSV (x,y,z rows)")->required();
  align->add_option("--reference", align_reference, "reference configuration CSV")->required();
  align->add_option("--output", align_output, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (align->parsed()) {
      specnet::commands::align(align_input, align_reference, align_output, std::cout);
      return 0;
    }
    auto config = specnet::load_config(config_path);
    if (!output.empty())
      config.output = output;
    if (seed)
      specnet::override_seed(config, *seed);
    if (sample->parsed())
      specnet::commands::sample(config, std::cout);
    else if (fvm->parsed())
      specnet::commands::fvm(config, std::cout);
    else if (train->parsed())
      specnet::commands::train(config, std::cout);
    else if (eval->parsed())
      specnet::commands::eval(config, std::cout);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
