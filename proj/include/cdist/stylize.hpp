#pragma once

#include "cdist/arch.hpp"
#include "cdist/checkpoint.hpp"
#include "cdist/losses.hpp"
#include "cdist/network.hpp"
#include "cdist/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace cdist {

/// Encoder truncated at ReLU_stage_1 with its decoder. A student encoder
/// carries the embedding that maps its output to the decoder's width.
struct StagePair {
  int stage = 0;
  Network encoder;
  std::optional<EmbeddingMap> embedding;
  Network decoder;
};

/// Reads a pair from a decoder checkpoint ("encoder" + "decoder") or a
/// distillation checkpoint ("student" + its output embedding + "decoder").
/// `prefer_student` selects the teacher of a distillation checkpoint when false.
StagePair stage_pair_from_checkpoint(const Checkpoint& ck, bool prefer_student = true);

/// Pairs for one or more stages, kept sorted by stage.
class ModelBundle {
 public:
  ModelBundle() = default;
  explicit ModelBundle(std::vector<StagePair> pairs);

  static ModelBundle from_checkpoints(const std::vector<std::filesystem::path>& dirs, bool prefer_student = true);

  const std::vector<StagePair>& pairs() const { return pairs_; }
  bool empty() const { return pairs_.empty(); }
  int deepest() const { return pairs_.empty() ? 0 : pairs_.back().stage; }
  /// Throws ArgumentError when no pair exists for the stage.
  const StagePair& at_stage(int stage) const;
  /// Largest 2^(stage-1) over all pairs.
  int divisor() const;

 private:
  std::vector<StagePair> pairs_;
};

/// Coarse-to-fine WCT: from the deepest pair to the shallowest, encode,
/// whiten/color against the style, blend with alpha and decode. Inputs are
/// reflect-padded to the bundle divisor and the output is cropped back and
/// clipped to [0, 1].
Tensor wct_stylize(const ModelBundle& bundle, const Tensor& content, const Tensor& style, double alpha = 1.0);

/// The same cascade with the feature transform removed.
Tensor reconstruct(const ModelBundle& bundle, const Tensor& content);

/// Single pass at stage min(4, deepest): AdaIN on the (embedded) features,
/// blended with alpha, decoded and clipped.
Tensor adain_stylize(const ModelBundle& bundle, const Tensor& content, const Tensor& style, double alpha = 1.0);

/// Normalized Gram terms are orders of magnitude smaller than the content
/// term, so pixel optimization uses a heavier style weight than training.
inline LossWeights gatys_default_weights() {
  LossWeights w;
  w.lambda_s = 1e4;
  return w;
}

struct GatysOptions {
  int iterations = 200;
  LossWeights weights = gatys_default_weights();
};

struct GatysResult {
  Tensor image;
  std::vector<double> loss_history;  // initial loss, then one entry per accepted step
  bool aborted = false;              // non-finite loss; image is the best seen
};

/// Optimizes the pixels (initialized from the content image) to minimize
/// content + lambda_s * style with L-BFGS. Style is matched at every
/// ReLU_k_1 tap; content at ReLU{c}_2 when present, else at tap c, with
/// c = min(4, stages).
GatysResult gatys_stylize(const Tensor& content, const Tensor& style, const Network& encoder,
                          const GatysOptions& options = {});

/// Gatys objective and its pixel gradient at `image`.
double gatys_loss(const Tensor& image, const Tensor& content, const Tensor& style, const Network& encoder,
                  const LossWeights& w, Tensor* grad = nullptr);

void write_loss_csv(const std::vector<double>& history, const std::filesystem::path& path);

/// Largest square side S, a multiple of 2^(max_stage-1), whose activation
/// estimate fits the budget. Throws InfeasibleError when even the smallest
/// side does not fit.
int probe_max_resolution(const ArchSpec& spec, std::int64_t budget_bytes, int bytes_per_scalar = 4);

}  // namespace cdist
