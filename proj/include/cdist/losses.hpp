#pragma once

#include "cdist/network.hpp"
#include "cdist/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cdist {

/// Weights of the training objectives. Every squared-error term is a mean
/// over its elements.
struct LossWeights {
  double lambda_p = 1.0;   // perceptual vs pixel reconstruction
  double lambda_s = 10.0;  // style vs content in stylization
  double beta = 10.0;      // embedding vs collaboration in distillation

  void validate() const;
};

/// Linear map Q (C x C') taking student features to teacher width at one
/// tap. No bias.
struct EmbeddingMap {
  Eigen::MatrixXd q;
  int tap_stage = 0;

  int teacher_channels() const { return static_cast<int>(q.rows()); }
  int student_channels() const { return static_cast<int>(q.cols()); }

  /// Fan-in scaled uniform initialization.
  static EmbeddingMap initialized(int teacher_channels, int student_channels, int tap_stage, std::uint64_t seed);
  static EmbeddingMap identity(int channels, int tap_stage);

  /// Q applied at every spatial position of every image in the batch.
  Tensor apply(const Tensor& student) const;
  /// Given d/d(apply(student)), accumulates d/dQ and returns d/d(student).
  Tensor backward(const Tensor& student, const Tensor& grad_output, Eigen::MatrixXd* grad_q) const;
};

struct ReconstructionLoss {
  double total = 0.0;
  double pixel = 0.0;
  double perceptual = 0.0;  // unweighted sum over stages
  Tensor grad_image;        // d total / d I_r through the pixel term
  std::vector<Tensor> grad_taps;  // d total / d F_r^(i), i = 1..k
};

/// mean((I_r - I_o)^2) + lambda_p * sum_{i<=k} mean((F_r^(i) - F_o^(i))^2)
ReconstructionLoss reconstruction_loss(const Tensor& recon, const Tensor& original, const FeatureTaps& taps_recon,
                                       const FeatureTaps& taps_original, int k, const LossWeights& w);

struct StylizationLoss {
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;  // unweighted sum over stages
  std::vector<Tensor> grad_taps;
};

/// mean((F_st^(c) - F_c^(c))^2) + lambda_s * sum_{i<=c} mean((G_st^(i) - G_s^(i))^2)
/// with Gram matrices normalized by C*H*W and c = min(4, available stages).
/// Per-image terms are averaged over the batch.
StylizationLoss stylization_loss(const FeatureTaps& taps_stylized, const FeatureTaps& taps_content,
                                 const FeatureTaps& taps_style, const LossWeights& w);

struct EmbeddingLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_q;
  Tensor grad_student;
};

/// mean((F - Q F')^2) over every element of the teacher batch.
EmbeddingLoss embedding_loss(const Tensor& teacher, const Tensor& student, const EmbeddingMap& q);

/// beta * sum(embed) + collab.
double total_distill_loss(std::span<const double> embed_terms, double collab_term, double beta);

}  // namespace cdist
