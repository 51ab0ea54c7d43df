// pagerec: experiment runner. Exit codes: 0 ok, 1 invalid config or
// arguments, 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pagerec/errors.hpp"
#include "pagerec/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Session recommendation with non-item pages"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::string> seeds;
  app.add_option("--config", config_path, "flat JSON config file");
  app.add_option("--set", overrides, "override one key, key=value (repeatable)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seeds", seeds, "comma-separated seed list");

  const char* help[] = {
      "load, preprocess and summarize a corpus",
      "generate a synthetic corpus with list pages",
      "compare transition hypotheses over a sweep of k",
      "train models, one per seed, and evaluate on the test split",
      "evaluate saved checkpoints or the genre popularity baseline",
      "train across page-shuffle ratios plus an items-only baseline",
      "embedding divergence tables and embedding export",
  };
  const auto& names = pagerec::command_names();
  for (std::size_t i = 0; i < names.size(); ++i) app.add_subcommand(names[i], help[i])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // --set is repeatable; CLI11 keeps every occurrence in the vector.
  if (out_dir) overrides.push_back("out=" + *out_dir);
  if (seeds) overrides.push_back("seeds=" + *seeds);

  pagerec::ExperimentConfig cfg;
  try {
    const auto file = config_path.empty() ? nlohmann::ordered_json() : pagerec::load_config_file(config_path);
    cfg = pagerec::parse_config(pagerec::resolve_config(file, overrides));
  } catch (const std::exception& e) {
    std::cerr << "pagerec: " << e.what() << '\n';
    return 1;
  }

  try {
    pagerec::run_command(app.get_subcommands().front()->get_name(), cfg, std::cerr);
  } catch (const pagerec::ConfigError& e) {
    std::cerr << "pagerec: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pagerec: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
