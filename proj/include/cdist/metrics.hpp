#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

namespace cdist {

/// Per-step loss telemetry. Absent components are omitted from the JSON.
struct MetricsRecord {
  std::int64_t step = 0;
  int epoch = 0;
  std::optional<double> pixel;
  std::optional<double> perceptual;
  std::optional<double> content;
  std::optional<double> style;
  std::vector<double> embed;  // one per tap, stage order
  std::optional<double> collab;
  double total = 0.0;
  double wall_clock = 0.0;  // seconds since the run started

  nlohmann::json to_json() const;
};

/// Appends one JSON object per line.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const MetricsRecord& record);

 private:
  std::ofstream out_;
};

}  // namespace cdist
