#pragma once

#include "cdist/checkpoint.hpp"
#include "cdist/corpus.hpp"
#include "cdist/losses.hpp"
#include "cdist/metrics.hpp"
#include "cdist/network.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cdist {

enum class Collaboration { kReconstruction, kStylization };

Collaboration collaboration_from_string(const std::string& s);
std::string to_string(Collaboration c);

struct HyperParams {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 20;
  int resize = 300;
  int crop = 256;
  // Overrides epochs when positive.
  std::int64_t max_steps = 0;
  LossWeights weights;
  // Weight of the collaboration term in distillation (0 = embedding only).
  double collab_weight = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the values of `base`; unknown keys raise ConfigError.
  static HyperParams from_json(const nlohmann::json& j, const HyperParams& base);
  static HyperParams from_json(const nlohmann::json& j) { return from_json(j, HyperParams{}); }
};

struct TrainOptions {
  std::uint64_t seed = 0;
  // Single-threaded batch preparation; otherwise a producer thread prefetches.
  bool deterministic = true;
  // When set, the last good state is written to <out_dir>/last_good on divergence.
  std::filesystem::path out_dir;
  std::function<void(const MetricsRecord&)> on_metrics;
};

/// Content corpus, plus the style corpus for stylization collaboration.
struct TrainingData {
  const Corpus* content = nullptr;
  const Corpus* style = nullptr;
};

struct DecoderResult {
  Network decoder;
  std::vector<MetricsRecord> history;
  Checkpoint checkpoint;
};

/// Step 1: trains the mirrored decoder of `encoder` truncated at `stage`
/// against the frozen encoder, by reconstruction (pixel + perceptual) or
/// by AdaIN stylization (content + Gram style). The encoder is not modified.
/// Collaboration loss of decoder(encoder(content)) for one batch; the stage
/// is the decoder's. Decoder parameter gradients are accumulated into
/// `grads` when non-null. `style` is required for stylization.
double decoder_objective(const Network& encoder, const Network& decoder, const Tensor& content, const Tensor* style,
                         const HyperParams& hp, Collaboration collaboration, ParamGrads* grads = nullptr,
                         MetricsRecord* rec = nullptr);

/// beta * sum_k embed_k + collab_weight * collab for one batch, with the
/// teacher and decoder frozen. Student and embedding gradients are
/// accumulated when both pointers are non-null.
double distill_objective(const Network& teacher, const Network& decoder, const Network& student,
                         const std::vector<EmbeddingMap>& embeddings, const Tensor& content, const Tensor* style,
                         const HyperParams& hp, Collaboration collaboration, ParamGrads* student_grads = nullptr,
                         std::vector<Eigen::MatrixXd>* q_grads = nullptr, MetricsRecord* rec = nullptr);

DecoderResult train_decoder(const Network& encoder, int stage, const TrainingData& data, const HyperParams& hp,
                            Collaboration collaboration, const TrainOptions& options);

enum class StudentInit { kL1Filters, kRandom };

struct DistillResult {
  Network student;
  std::vector<EmbeddingMap> embeddings;  // taps 1..k, the last feeds the decoder
  // State before the first update.
  Network initial_student;
  std::vector<EmbeddingMap> initial_embeddings;
  std::vector<MetricsRecord> history;
  Checkpoint checkpoint;
};

/// Step 2: trains a narrow student encoder so that, mapped through its
/// output embedding, it drives the frozen collaborator decoder, with linear
/// embedding losses on every ReLU_k_1 tap. Teacher and decoder stay frozen.
DistillResult collaborative_distill(const Network& teacher, const Network& decoder, const ArchSpec& student_spec,
                                    const TrainingData& data, const HyperParams& hp, Collaboration collaboration,
                                    const TrainOptions& options, StudentInit init = StudentInit::kL1Filters);

struct DistillObjectives {
  std::vector<double> embed;  // per tap, unweighted
  double collab = 0.0;        // unweighted collaboration loss
};

/// Both distillation objectives on one fixed batch, without updating
/// anything. `style` is required for stylization collaboration.
DistillObjectives evaluate_distill(const Network& teacher, const Network& decoder, const Network& student,
                                   const std::vector<EmbeddingMap>& embeddings, const Tensor& content,
                                   const Tensor* style, const HyperParams& hp, Collaboration collaboration);

/// Copy of an encoder cut at ReLU_stage_1.
Network truncate_encoder(const Network& encoder, int stage);

/// Mean pixel MSE of decoder(embedding(encoder(x))) against x; `embedding`
/// may be null when widths already match.
double reconstruction_error(const Network& encoder, const EmbeddingMap* embedding, const Network& decoder,
                            const std::vector<Tensor>& images);

struct TrainedPair {
  Network encoder;
  Network decoder;
  std::int64_t steps = 0;
};

/// errors[i][j]: reconstruction error of encoder i feeding decoder j.
using CrossMatrix = std::array<std::array<double, 2>, 2>;

/// Evaluates every encoder x decoder combination of two trained pairs.
/// Throws PreconditionError if a pair was never trained.
CrossMatrix cross_pair_experiment(const TrainedPair& a, const TrainedPair& b, const std::vector<Tensor>& images);

/// Mixes a seed with a stream id (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cdist
