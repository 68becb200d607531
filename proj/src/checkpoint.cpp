#include "cdist/checkpoint.hpp"

#include "cdist/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace cdist {
namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "tensors.bin";
constexpr const char* kEmbedPrefix = "embed/stage";

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

const char* role_name(NetworkRole r) { return r == NetworkRole::kEncoder ? "encoder" : "decoder"; }

}  // namespace

void Checkpoint::put_network(const std::string& name, const Network& net) {
  networks[name] = {net.role(), net.spec()};
  for (const auto& c : net.convs()) {
    tensors[name + "/" + c.name + ".weight"] = {{c.out_channels, c.in_channels, 3, 3}, c.weight};
    tensors[name + "/" + c.name + ".bias"] = {{c.out_channels}, c.bias};
  }
}

Network Checkpoint::network(const std::string& name) const {
  const auto it = networks.find(name);
  if (it == networks.end()) throw DataError("checkpoint has no network '" + name + "'");
  Network net(it->second.spec, it->second.role);
  for (auto& c : net.convs()) {
    const auto w = tensors.find(name + "/" + c.name + ".weight");
    const auto b = tensors.find(name + "/" + c.name + ".bias");
    if (w == tensors.end() || b == tensors.end()) throw DataError("checkpoint is missing tensors of " + name + "/" + c.name);
    if (w->second.values.size() != c.weight.size() || b->second.values.size() != c.bias.size())
      throw DataError("checkpoint tensor shape mismatch for " + name + "/" + c.name);
    c.weight = w->second.values;
    c.bias = b->second.values;
  }
  return net;
}

void Checkpoint::put_embedding(const EmbeddingMap& map) {
  StoredTensor t{{map.q.rows(), map.q.cols()}, {}};
  t.values.reserve(map.q.size());
  for (Eigen::Index r = 0; r < map.q.rows(); ++r)
    for (Eigen::Index c = 0; c < map.q.cols(); ++c) t.values.push_back(map.q(r, c));
  tensors[kEmbedPrefix + std::to_string(map.tap_stage)] = std::move(t);
}

std::vector<EmbeddingMap> Checkpoint::embeddings() const {
  std::vector<EmbeddingMap> out;
  const std::string prefix = kEmbedPrefix;
  for (const auto& [name, t] : tensors) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (t.shape.size() != 2) throw DataError("embedding " + name + " is not a matrix");
    EmbeddingMap m;
    m.tap_stage = std::stoi(name.substr(prefix.size()));
    m.q.resize(t.shape[0], t.shape[1]);
    for (Eigen::Index r = 0; r < m.q.rows(); ++r)
      for (Eigen::Index c = 0; c < m.q.cols(); ++c) m.q(r, c) = t.values[r * m.q.cols() + c];
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.tap_stage < b.tap_stage; });
  return out;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "cdist-checkpoint";
  manifest["format_version"] = kFormatVersion;
  manifest["step"] = step;
  manifest["hyperparams"] = hyperparams;
  manifest["info"] = info;
  manifest["blob"] = kBlob;
  manifest["dtype"] = "float64-le";
  nlohmann::json nets = nlohmann::json::object();
  for (const auto& [name, e] : networks) nets[name] = {{"role", role_name(e.role)}, {"arch", to_json(e.spec)}};
  manifest["networks"] = nets;

  std::string blob;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    if (element_count(t.shape) != static_cast<std::int64_t>(t.values.size()))
      throw ArgumentError("tensor " + name + " has inconsistent shape");
    list.push_back({{"name", name}, {"shape", t.shape}, {"offset", blob.size()}, {"bytes", t.values.size() * 8}});
    for (double v : t.values) append_le(blob, v);
  }
  manifest["tensors"] = list;

  std::ofstream m(dir / kManifest, std::ios::binary | std::ios::trunc);
  m << manifest.dump(2) << "\n";
  std::ofstream b(dir / kBlob, std::ios::binary | std::ios::trunc);
  b.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!m || !b) throw DataError("failed to write checkpoint to " + dir.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  std::ifstream m(dir / kManifest);
  if (!m) throw DataError("no checkpoint manifest in " + dir.string());
  Checkpoint ck;
  try {
    const nlohmann::json manifest = nlohmann::json::parse(m);
    if (manifest.at("format") != "cdist-checkpoint") throw DataError("not a cdist checkpoint");
    const int version = manifest.at("format_version").get<int>();
    if (version != kFormatVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    ck.step = manifest.at("step").get<std::int64_t>();
    ck.hyperparams = manifest.at("hyperparams");
    ck.info = manifest.at("info");
    for (const auto& [name, e] : manifest.at("networks").items()) {
      const std::string role = e.at("role");
      ck.networks[name] = {role == "encoder" ? NetworkRole::kEncoder : NetworkRole::kDecoder, arch_from_json(e.at("arch"))};
    }

    std::ifstream b(dir / manifest.at("blob").get<std::string>(), std::ios::binary);
    if (!b) throw DataError("checkpoint blob missing in " + dir.string());
    const std::string blob((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    for (const auto& entry : manifest.at("tensors")) {
      StoredTensor t;
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t nbytes = entry.at("bytes").get<std::size_t>();
      if (nbytes != static_cast<std::size_t>(element_count(t.shape)) * 8 || offset + nbytes > blob.size())
        throw DataError("tensor " + entry.at("name").get<std::string>() + " has an invalid extent");
      t.values.resize(nbytes / 8);
      for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = read_le(bytes + offset + 8 * i);
      ck.tensors[entry.at("name").get<std::string>()] = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return ck;
}

}  // namespace cdist
