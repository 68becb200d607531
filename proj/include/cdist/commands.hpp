#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace cdist {

inline constexpr int kReportSchemaVersion = 1;

/// Inputs shared by every command. Flags given on the command line override
/// the matching config keys.
struct RunOptions {
  nlohmann::json config = nlohmann::json::object();
  // Relative paths in the config resolve against this directory.
  std::filesystem::path base_dir = ".";
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

/// Each command validates its config (unknown keys raise ConfigError),
/// writes config.resolved.json and report.json under the output directory
/// and returns the report.
nlohmann::json cmd_train_decoder(const RunOptions& run);
nlohmann::json cmd_distill(const RunOptions& run);
nlohmann::json cmd_stylize(const RunOptions& run);
nlohmann::json cmd_gatys(const RunOptions& run);
nlohmann::json cmd_eval(const RunOptions& run);
nlohmann::json cmd_bench(const RunOptions& run);
nlohmann::json cmd_cross_pair(const RunOptions& run);

/// Dispatches by command name ("train-decoder", "distill", ...).
nlohmann::json run_command(const std::string& name, const RunOptions& run);

}  // namespace cdist
