#include <iostream>

#include <CLI11.hpp>

#include "ustat/error.hpp"
#include "ustat/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Compute, resample and verify U-statistics"};
  app.set_version_flag("--version", ustat::kVersion);
  app.require_subcommand(1);

  ustat::RunOptions options;
  int threads = 0;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", options.config_path, "YAML experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--threads", threads, "Worker threads (1 gives bit-exact reruns)")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory");

  auto* list = app.add_subcommand("list-builtins", "List built-in kernels, laws, schemes and designs");

  CLI11_PARSE(app, argc, argv);

  if (list->parsed()) {
    for (const auto& line : ustat::list_builtins()) std::cout << line << '\n';
    return 0;
  }
  try {
    if (threads > 0) options.threads = threads;
    if (!out_dir.empty()) options.out_dir = out_dir;
    options.seed_override = ustat::seed_from_env();
    const auto result = ustat::run_experiment(options);
    std::cout << (result.pass ? "PASS" : "FAIL") << "  " << result.summary_path << '\n';
    return result.exit_code;
  } catch (const ustat::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
