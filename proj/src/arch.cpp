#include "cdist/arch.hpp"

#include "cdist/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cdist {
namespace {

const std::vector<std::vector<int>>& vgg19_layout() {
  static const std::vector<std::vector<int>> layout = {
      {64, 64}, {128, 128}, {256, 256, 256, 256}, {512, 512, 512, 512}, {512}};
  return layout;
}

void check_divisible(const ArchSpec& spec, int h, int w) {
  if (h <= 0 || w <= 0) throw PreconditionError("input size must be positive");
  const int d = spec.divisor();
  if (h % d != 0 || w % d != 0)
    throw PreconditionError("input " + std::to_string(h) + "x" + std::to_string(w) +
                            " is not divisible by " + std::to_string(d));
}

}  // namespace

int scale_width(int width, double factor) {
  return std::max(1, static_cast<int>(std::lround(width * factor)));
}

ArchSpec ArchSpec::reference(int max_stage, double width_factor) {
  if (max_stage < 1 || max_stage > 5) throw SpecError("max_stage must be in 1..5");
  if (!(width_factor > 0.0) || !std::isfinite(width_factor)) throw SpecError("width_factor must be positive");
  ArchSpec spec;
  spec.max_stage = max_stage;
  spec.width_factor = width_factor;
  const auto& ref = vgg19_layout();
  for (int s = 0; s < max_stage; ++s) {
    std::vector<int> stage;
    const std::size_t convs = s + 1 == max_stage ? 1 : ref[s].size();
    for (std::size_t i = 0; i < convs; ++i) stage.push_back(scale_width(ref[s][i], width_factor));
    spec.layout.push_back(std::move(stage));
  }
  return spec;
}

ArchSpec ArchSpec::from_layout(std::vector<std::vector<int>> layout) {
  ArchSpec spec;
  spec.max_stage = static_cast<int>(layout.size());
  spec.layout = std::move(layout);
  return spec;
}

ArchSpec ArchSpec::preset(std::string_view name) {
  if (name == "vgg19") return reference(5, 1.0);
  if (name == "vgg19-quarter") return reference(5, 0.25);
  throw SpecError("unknown architecture preset '" + std::string(name) + "'");
}

void ArchSpec::validate() const {
  if (max_stage < 1 || max_stage > 5) throw SpecError("max_stage must be in 1..5");
  if (static_cast<int>(layout.size()) != max_stage)
    throw SpecError("layout must list exactly max_stage stages");
  for (const auto& stage : layout) {
    if (stage.empty()) throw SpecError("every stage needs at least one convolution");
    for (int w : stage)
      if (w <= 0) throw SpecError("layer widths must be positive");
  }
}

ArchSpec ArchSpec::truncated(int stage) const {
  if (stage < 1 || stage > max_stage) throw ArgumentError("truncation stage out of range");
  ArchSpec out = *this;
  out.max_stage = stage;
  out.layout.resize(stage);
  out.layout.back().resize(1);
  return out;
}

int ArchSpec::num_convs() const {
  int n = 0;
  for (const auto& s : layout) n += static_cast<int>(s.size());
  return n;
}

int ArchSpec::output_channels() const { return layout.empty() ? 3 : layout.back().back(); }

std::vector<int> ArchSpec::tap_channels() const {
  std::vector<int> out;
  for (const auto& s : layout) out.push_back(s.front());
  return out;
}

nlohmann::json to_json(const ArchSpec& spec) {
  return {{"max_stage", spec.max_stage}, {"width_factor", spec.width_factor}, {"layout", spec.layout}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("architecture must be a JSON object");
  static const std::set<std::string> allowed = {"preset", "max_stage", "width_factor", "layout"};
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw SpecError("unknown architecture key '" + key + "'");
  try {
    const double factor = j.value("width_factor", 1.0);
    ArchSpec spec;
    if (j.contains("layout")) {
      spec = ArchSpec::from_layout(j.at("layout").get<std::vector<std::vector<int>>>());
      spec.width_factor = factor;
      if (j.contains("max_stage") && j.at("max_stage").get<int>() != spec.max_stage)
        throw SpecError("max_stage disagrees with explicit layout");
    } else {
      const std::string preset = j.value("preset", std::string("vgg19"));
      if (preset != "vgg19" && preset != "vgg19-quarter")
        throw SpecError("unknown architecture preset '" + preset + "'");
      const double base = preset == "vgg19-quarter" ? 0.25 : 1.0;
      spec = ArchSpec::reference(j.value("max_stage", 5), base * factor);
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed architecture: ") + e.what());
  }
}

std::vector<LayerShape> encoder_layers(const ArchSpec& spec) {
  std::vector<LayerShape> out;
  int channels = 3;
  for (int s = 0; s < static_cast<int>(spec.layout.size()); ++s) {
    if (s > 0) out.push_back({LayerKind::kMaxPool, channels, channels, s - 1, false, 0, "pool" + std::to_string(s)});
    for (std::size_t i = 0; i < spec.layout[s].size(); ++i) {
      const int width = spec.layout[s][i];
      LayerShape l{LayerKind::kConv, channels, width, s, true, i == 0 ? s + 1 : 0,
                   "conv" + std::to_string(s + 1) + "_" + std::to_string(i + 1)};
      out.push_back(l);
      channels = width;
    }
  }
  return out;
}

std::vector<LayerShape> decoder_layers(const ArchSpec& spec) {
  // Mirror every encoder convolution in reverse order: the mirrored layer
  // produces the width its counterpart produced, the last one produces RGB.
  struct Src {
    int stage, index, width;
  };
  std::vector<Src> convs;
  for (int s = 0; s < static_cast<int>(spec.layout.size()); ++s)
    for (std::size_t i = 0; i < spec.layout[s].size(); ++i) convs.push_back({s, static_cast<int>(i), spec.layout[s][i]});
  std::reverse(convs.begin(), convs.end());

  std::vector<LayerShape> out;
  int channels = spec.output_channels();
  for (std::size_t j = 0; j < convs.size(); ++j) {
    const bool last = j + 1 == convs.size();
    const int width = last ? 3 : convs[j].width;
    out.push_back({LayerKind::kConv, channels, width, convs[j].stage, !last, 0,
                   "dec" + std::to_string(convs[j].stage + 1) + "_" + std::to_string(convs[j].index + 1)});
    channels = width;
    if (convs[j].index == 0 && convs[j].stage > 0)
      out.push_back({LayerKind::kUpsample, channels, channels, convs[j].stage, false, 0,
                     "up" + std::to_string(convs[j].stage)});
  }
  return out;
}

std::int64_t count_params(const ArchSpec& spec, bool include_decoder) {
  auto sum = [](const std::vector<LayerShape>& layers) {
    std::int64_t n = 0;
    for (const auto& l : layers)
      if (l.kind == LayerKind::kConv) n += static_cast<std::int64_t>(l.in_channels) * l.out_channels * 9 + l.out_channels;
    return n;
  };
  std::int64_t total = sum(encoder_layers(spec));
  if (include_decoder) total += sum(decoder_layers(spec));
  return total;
}

std::int64_t conv3x3_flops(int in_channels, int out_channels, int h, int w) {
  return 2 * static_cast<std::int64_t>(h) * w * in_channels * out_channels * 9;
}

std::int64_t count_flops(const ArchSpec& spec, int input_h, int input_w, bool include_decoder) {
  if (spec.layout.empty()) return 0;
  check_divisible(spec, input_h, input_w);
  auto sum = [&](const std::vector<LayerShape>& layers) {
    std::int64_t flops = 0;
    for (const auto& l : layers)
      if (l.kind == LayerKind::kConv)
        flops += conv3x3_flops(l.in_channels, l.out_channels, input_h >> l.level, input_w >> l.level);
    return flops;
  };
  std::int64_t total = sum(encoder_layers(spec));
  if (include_decoder) total += sum(decoder_layers(spec));
  return total;
}

std::int64_t estimate_peak_activation_memory(const ArchSpec& spec, int input_h, int input_w,
                                             int bytes_per_scalar) {
  if (spec.layout.empty()) return 0;
  check_divisible(spec, input_h, input_w);
  auto area = [&](int level) { return static_cast<std::int64_t>(input_h >> level) * (input_w >> level); };

  std::int64_t widest = 0;
  auto visit = [&](const LayerShape& l) {
    std::int64_t in = 0, out = 0;
    switch (l.kind) {
      case LayerKind::kConv:
        in = l.in_channels * area(l.level);
        out = l.out_channels * area(l.level);
        break;
      case LayerKind::kMaxPool:
        in = l.in_channels * area(l.level);
        out = l.out_channels * area(l.level + 1);
        break;
      case LayerKind::kUpsample:
        in = l.in_channels * area(l.level);
        out = l.out_channels * area(l.level - 1);
        break;
    }
    widest = std::max(widest, in + out);
  };
  for (const auto& l : encoder_layers(spec)) visit(l);
  for (const auto& l : decoder_layers(spec)) visit(l);

  std::int64_t taps = 0;
  const auto channels = spec.tap_channels();
  for (int k = 0; k + 1 < spec.max_stage; ++k) taps += channels[k] * area(k);
  return (widest + taps) * bytes_per_scalar;
}

ParamBreakdown param_breakdown(const ArchSpec& spec) {
  ParamBreakdown b;
  b.encoder = count_params(spec, false);
  b.pair = count_params(spec, true);
  b.decoder = b.pair - b.encoder;
  for (int k = 1; k <= spec.max_stage; ++k) b.all_stage_pairs += count_params(spec.truncated(k), true);
  return b;
}

}  // namespace cdist
