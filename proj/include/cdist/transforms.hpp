#pragma once

#include "cdist/network.hpp"
#include "cdist/tensor.hpp"

#include <optional>

namespace cdist {

/// F * F^T over the flattened C x HW view; divided by C*H*W when
/// `normalize` is set.
Eigen::MatrixXd gram(const FeatureMap& f, bool normalize);

/// Gradient of a loss with respect to F given its gradient with respect to
/// gram(F, normalize).
RowMatrix gram_backward(const FeatureMap& f, const Eigen::MatrixXd& grad_gram, bool normalize);

/// Per-channel mean and (HW-1)-normalized covariance of the centered
/// features with its symmetric eigendecomposition.
struct StyleStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd eigvals;  // ascending
  Eigen::MatrixXd eigvecs;  // columns

  int channels() const { return static_cast<int>(mean.size()); }
  /// Eigenvalues at or below this are dropped: 1e-8 of the largest one.
  double default_floor() const;
};

StyleStats compute_stats(const FeatureMap& f);

/// Decorrelates F: E diag(d^-1/2) E^T (F - mu) over eigenpairs with
/// d > eig_floor (default StyleStats::default_floor()).
FeatureMap whiten(const FeatureMap& f, const StyleStats& stats, std::optional<double> eig_floor = std::nullopt);

/// Imposes the style statistics on whitened features:
/// E_s diag(d_s^1/2) E_s^T F + mu_s.
FeatureMap color(const FeatureMap& whitened, const StyleStats& style, std::optional<double> eig_floor = std::nullopt);

/// alpha * color(whiten(content), style) + (1 - alpha) * content.
FeatureMap wct_transfer(const FeatureMap& content, const FeatureMap& style, double alpha = 1.0);

/// Per channel: sigma_s (x - mu_c) / (sigma_c + eps) + mu_s with population
/// standard deviations. Constant content channels map to mu_s.
FeatureMap adain_transfer(const FeatureMap& content, const FeatureMap& style, double eps = 1e-5);

struct AdainGrads {
  FeatureMap content;
  FeatureMap style;
};

/// Gradients of a loss through adain_transfer given d(loss)/d(output).
AdainGrads adain_backward(const FeatureMap& content, const FeatureMap& style, const FeatureMap& grad_output,
                          double eps = 1e-5);

/// Batched AdaIN over tensors with matching batch size.
Tensor adain_transfer(const Tensor& content, const Tensor& style, double eps = 1e-5);

/// Frobenius distance between the normalized Gram matrices of the
/// ReLU_stage_1 features of two single images under `eval_encoder`.
double style_distance(const Tensor& stylized, const Tensor& style, const Network& eval_encoder, int stage);

/// Number of eigenvalues of a symmetric matrix above rel_threshold * max.
int count_significant_eigenvalues(const Eigen::MatrixXd& symmetric, double rel_threshold = 1e-8);

}  // namespace cdist
