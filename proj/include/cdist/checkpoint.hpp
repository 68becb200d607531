#pragma once

#include "cdist/losses.hpp"
#include "cdist/network.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cdist {

struct StoredTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
};

/// Persisted model state: a directory holding `manifest.json` (versioned,
/// lists every tensor with shape and byte offset) and `tensors.bin` (raw
/// little-endian float64 blobs in manifest order).
class Checkpoint {
 public:
  static constexpr int kFormatVersion = 1;

  struct NetworkEntry {
    NetworkRole role = NetworkRole::kEncoder;
    ArchSpec spec;
  };

  std::map<std::string, NetworkEntry> networks;
  std::map<std::string, StoredTensor> tensors;
  nlohmann::json hyperparams = nlohmann::json::object();
  nlohmann::json info = nlohmann::json::object();
  std::int64_t step = 0;

  void put_network(const std::string& name, const Network& net);
  bool has_network(const std::string& name) const { return networks.count(name) != 0; }
  Network network(const std::string& name) const;

  void put_embedding(const EmbeddingMap& map);
  /// Embedding maps ordered by tap stage.
  std::vector<EmbeddingMap> embeddings() const;

  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);
};

}  // namespace cdist
