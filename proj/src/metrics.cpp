#include "cdist/metrics.hpp"

#include "cdist/error.hpp"

namespace cdist {

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  if (pixel) j["pixel"] = *pixel;
  if (perceptual) j["perceptual"] = *perceptual;
  if (content) j["content"] = *content;
  if (style) j["style"] = *style;
  if (!embed.empty()) j["embed"] = embed;
  if (collab) j["collab"] = *collab;
  j["total"] = total;
  j["wall_clock_s"] = wall_clock;
  return j;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw DataError("cannot open metrics file " + path.string());
}

void MetricsWriter::write(const MetricsRecord& record) {
  out_ << record.to_json().dump() << "\n";
  out_.flush();
}

}  // namespace cdist
