#pragma once

#include "cdist/arch.hpp"
#include "cdist/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cdist {

enum class NetworkRole { kEncoder, kDecoder };

/// 3x3 stride-1 same-padded convolution. Weights are stored out x in x 3 x 3.
struct ConvParams {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  std::span<const double> filter(int out) const {
    return std::span<const double>(weight).subspan(static_cast<std::size_t>(out) * in_channels * 9, in_channels * 9);
  }
};

/// ReLU_k_1 activations, stage k stored at index k-1.
struct FeatureTaps {
  std::vector<Tensor> stages;

  int size() const { return static_cast<int>(stages.size()); }
  const Tensor& stage(int k) const { return stages.at(k - 1); }
  Tensor& stage(int k) { return stages.at(k - 1); }
  const Tensor& output() const { return stages.back(); }
};

/// Everything backward() needs from a forward pass.
struct ForwardTrace {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;

  int layers_run() const { return static_cast<int>(inputs.size()); }
};

/// Gradient with respect to the (post-activation) output of one layer.
struct LayerGrad {
  int layer = 0;
  const Tensor* grad = nullptr;
};

struct ParamGrads {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;

  void zero();
};

class Network {
 public:
  Network() = default;
  Network(ArchSpec spec, NetworkRole role);

  const ArchSpec& spec() const { return spec_; }
  NetworkRole role() const { return role_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::vector<ConvParams>& convs() { return convs_; }
  const std::vector<ConvParams>& convs() const { return convs_; }
  int input_channels() const { return layers_.empty() ? 0 : layers_.front().in_channels; }
  int output_channels() const { return layers_.empty() ? 0 : layers_.back().out_channels; }
  std::int64_t parameter_count() const;

  /// Fan-in scaled uniform weights (bound sqrt(6 / fan_in)), zero biases.
  void initialize(std::uint64_t seed);

  /// Runs layers [0, stop_after]; stop_after < 0 runs the whole network.
  Tensor forward(const Tensor& x, ForwardTrace* trace = nullptr, int stop_after = -1) const;

  /// Encoders only: ReLU_k_1 activations for k = 1..up_to_stage (0 means
  /// max_stage). The forward pass stops at the last requested tap.
  FeatureTaps encode(const Tensor& x, ForwardTrace* trace = nullptr, int up_to_stage = 0) const;

  /// Back-propagates `grad_output` (gradient of the last layer run in
  /// `trace`, may be null) plus any per-layer output gradients. Parameter
  /// gradients are accumulated into `grads` when it is non-null. Returns the
  /// gradient with respect to the input, or an empty tensor when
  /// `need_input_grad` is false.
  Tensor backward(const ForwardTrace& trace, const Tensor* grad_output, std::span<const LayerGrad> layer_grads,
                  ParamGrads* grads, bool need_input_grad = true) const;

  /// Layer index carrying ReLU_k_1 for encoders.
  int tap_layer(int stage) const;
  /// Layer index of a convolution by name (its ReLU output), e.g. "conv4_2".
  int layer_index(const std::string& name) const;

  ParamGrads zero_grads() const;
  /// Weight and bias arrays in a fixed order, for optimizers.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<double>> grad_blocks(ParamGrads& grads) const;

  bool all_finite() const;
  /// FNV-1a over the raw parameter bytes; used to verify frozen networks.
  std::uint64_t fingerprint() const;

 private:
  ArchSpec spec_;
  NetworkRole role_ = NetworkRole::kEncoder;
  std::vector<LayerShape> layers_;
  std::vector<ConvParams> convs_;
  // Index into convs_ per layer, -1 for resampling layers.
  std::vector<int> conv_of_layer_;
};

Network build_encoder(const ArchSpec& spec, std::uint64_t seed = 0);
Network build_mirror_decoder(const ArchSpec& spec, std::uint64_t seed = 0);

// Layer kernels, exposed for testing.
namespace kernels {

void conv3x3_forward(const Tensor& x, const ConvParams& p, Tensor& y);
/// Accumulates dW/db when non-null; writes dx when non-null.
void conv3x3_backward(const Tensor& x, const ConvParams& p, const Tensor& dy, std::vector<double>* dw,
                      std::vector<double>* db, Tensor* dx);
Tensor max_pool2(const Tensor& x);
Tensor max_pool2_backward(const Tensor& x, const Tensor& dy);
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);

}  // namespace kernels

}  // namespace cdist
