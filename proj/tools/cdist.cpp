#include "collabdistill.h"

#include "CLI11.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

int run(const std::string& command, const Flags& f) {
  std::string text = "{}";
  std::string base = ".";
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) {
      std::cerr << "error (config): cannot read config file " << f.config << "\n";
      return 2;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    const auto parent = std::filesystem::path(f.config).parent_path();
    if (!parent.empty()) base = parent.string();
  }
  cd_run_options o{};
  o.config_json = text.c_str();
  o.base_dir = base.c_str();
  o.out_dir = f.out.empty() ? nullptr : f.out.c_str();
  o.has_seed = f.seed.has_value();
  o.seed = f.seed.value_or(0);
  o.deterministic = f.deterministic;
  char* report = nullptr;
  const cd_status s = cd_run_command(command.c_str(), &o, &report);
  if (s != CD_OK) {
    std::cerr << "error (" << cd_status_name(s) << "): " << cd_last_error() << "\n";
    return cd_exit_code(s);
  }
  std::cout << report << "\n";
  cd_string_free(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative distillation for encoder-decoder style transfer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cd_version()));

  const std::pair<const char*, const char*> commands[] = {
      {"train-decoder", "Train a decoder against a frozen encoder"},
      {"distill", "Distill a small encoder against a frozen decoder"},
      {"stylize", "Stylize an image with trained pairs (WCT or AdaIN)"},
      {"gatys", "Optimization-based style transfer with L-BFGS"},
      {"eval", "Style distances per stage over a directory"},
      {"bench", "Parameters, FLOPs, memory and max resolution"},
      {"cross-pair", "Cross-paired encoder/decoder reconstruction matrix"},
  };
  Flags flags;
  std::string chosen;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "Seed (overrides the config)");
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
    sub->add_flag("--deterministic", flags.deterministic, "Single-threaded data pipeline");
    sub->callback([&chosen, n = std::string(name)] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run(chosen, flags);
}
