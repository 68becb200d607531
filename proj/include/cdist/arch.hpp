#pragma once

#include "json.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdist {

/// Declarative description of a VGG-style encoder truncated at ReLU_k_1 for
/// k = max_stage. `layout[s]` holds the output widths of the 3x3 convolutions
/// of stage s+1; a 2x2 max-pool separates consecutive stages. The mirrored
/// decoder is derived from the same description.
struct ArchSpec {
  int max_stage = 0;
  double width_factor = 1.0;
  std::vector<std::vector<int>> layout;

  /// VGG-19 up to ReLU_{max_stage}_1 with every width scaled by
  /// `width_factor` (rounded to nearest, minimum 1).
  static ArchSpec reference(int max_stage = 5, double width_factor = 1.0);
  /// Explicit per-stage widths; max_stage is the number of stages.
  static ArchSpec from_layout(std::vector<std::vector<int>> layout);
  /// Built-in named presets: "vgg19", "vgg19-quarter".
  static ArchSpec preset(std::string_view name);

  /// Throws SpecError unless max_stage is in 1..5, every stage is non-empty
  /// and every width is positive.
  void validate() const;

  /// Prefix of this spec ending at ReLU_{stage}_1.
  ArchSpec truncated(int stage) const;

  int num_convs() const;
  int output_channels() const;
  /// Channel count at ReLU_k_1 for k = 1..max_stage.
  std::vector<int> tap_channels() const;
  /// Input sides must be multiples of this.
  int divisor() const { return max_stage > 0 ? 1 << (max_stage - 1) : 1; }

  bool operator==(const ArchSpec& o) const { return max_stage == o.max_stage && layout == o.layout; }
};

int scale_width(int width, double factor);

nlohmann::json to_json(const ArchSpec& spec);
/// Accepts {"preset", "max_stage", "width_factor", "layout"}; an explicit
/// layout overrides preset and factor. Unknown keys are rejected.
ArchSpec arch_from_json(const nlohmann::json& j);

enum class LayerKind { kConv, kMaxPool, kUpsample };

/// One layer of an encoder or decoder. `level` is the spatial level of the
/// layer input (0 = full resolution, l = divided by 2^l).
struct LayerShape {
  LayerKind kind = LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int level = 0;
  bool relu = false;
  // Set on the ReLU_k_1 outputs of an encoder; holds k.
  int tap_stage = 0;
  std::string name;
};

std::vector<LayerShape> encoder_layers(const ArchSpec& spec);
std::vector<LayerShape> decoder_layers(const ArchSpec& spec);

/// Weights + biases of every convolution of the encoder, plus its mirrored
/// decoder when `include_decoder` is set.
std::int64_t count_params(const ArchSpec& spec, bool include_decoder);

/// 2 * multiply-accumulates of one 3x3 same-padded convolution.
std::int64_t conv3x3_flops(int in_channels, int out_channels, int h, int w);

/// Forward-pass FLOPs counting 2 FLOPs per multiply-accumulate of every 3x3
/// convolution; activations and resampling are free.
std::int64_t count_flops(const ArchSpec& spec, int input_h, int input_w, bool include_decoder = false);

/// Upper bound on live activation bytes: the largest input+output pair of
/// any single layer (encoder and decoder) plus every retained intermediate
/// ReLU_k_1 tap.
std::int64_t estimate_peak_activation_memory(const ArchSpec& spec, int input_h, int input_w,
                                             int bytes_per_scalar);

struct ParamBreakdown {
  std::int64_t encoder = 0;
  std::int64_t decoder = 0;
  std::int64_t pair = 0;
  // Encoder+decoder pairs for every stage 1..max_stage, as used by a
  // cascaded stylizer.
  std::int64_t all_stage_pairs = 0;
};

ParamBreakdown param_breakdown(const ArchSpec& spec);

}  // namespace cdist
