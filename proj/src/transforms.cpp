#include "cdist/transforms.hpp"

#include "cdist/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace cdist {
namespace {

void require_same_channels(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (a.channels != b.channels) throw ArgumentError(std::string(what) + ": channel counts differ");
}

struct ChannelMoments {
  double mean = 0.0;
  double sigma = 0.0;
  bool constant = true;
};

ChannelMoments moments(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  ChannelMoments m;
  m.constant = row.maxCoeff() == row.minCoeff();
  m.mean = row.mean();
  if (!m.constant) m.sigma = std::sqrt((row.array() - m.mean).square().mean());
  return m;
}

// Projection E diag(g(d)) E^T restricted to eigenvalues above the floor.
Eigen::MatrixXd spectral_map(const StyleStats& s, double floor, double power, int* retained) {
  const int c = s.channels();
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(c);
  int kept = 0;
  for (int i = 0; i < c; ++i) {
    if (s.eigvals[i] > floor) {
      scale[i] = std::pow(s.eigvals[i], power);
      ++kept;
    }
  }
  if (retained != nullptr) *retained = kept;
  return s.eigvecs * scale.asDiagonal() * s.eigvecs.transpose();
}

}  // namespace

Eigen::MatrixXd gram(const FeatureMap& f, bool normalize) {
  Eigen::MatrixXd g = f.values * f.values.transpose();
  if (normalize) g /= static_cast<double>(f.channels) * f.spatial();
  return g;
}

RowMatrix gram_backward(const FeatureMap& f, const Eigen::MatrixXd& grad_gram, bool normalize) {
  RowMatrix d = (grad_gram + grad_gram.transpose()) * f.values;
  if (normalize) d /= static_cast<double>(f.channels) * f.spatial();
  return d;
}

double StyleStats::default_floor() const {
  if (eigvals.size() == 0) return 0.0;
  return 1e-8 * std::max(0.0, eigvals.maxCoeff());
}

StyleStats compute_stats(const FeatureMap& f) {
  if (f.spatial() < 2) throw DegenerateError("statistics need at least two spatial positions");
  StyleStats s;
  s.mean = f.values.rowwise().mean();
  const RowMatrix centered = f.values.colwise() - s.mean;
  s.covariance = centered * centered.transpose() / static_cast<double>(f.spatial() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.covariance);
  s.eigvals = eig.eigenvalues();
  s.eigvecs = eig.eigenvectors();
  return s;
}

FeatureMap whiten(const FeatureMap& f, const StyleStats& stats, std::optional<double> eig_floor) {
  if (stats.channels() != f.channels) throw ArgumentError("whiten: statistics do not match the feature");
  int retained = 0;
  const Eigen::MatrixXd w = spectral_map(stats, eig_floor.value_or(stats.default_floor()), -0.5, &retained);
  if (retained == 0) throw DegenerateError("whiten: every eigenvalue is at or below the floor");
  const RowMatrix centered = f.values.colwise() - stats.mean;
  return FeatureMap(f.channels, f.height, f.width, w * centered);
}

FeatureMap color(const FeatureMap& whitened, const StyleStats& style, std::optional<double> eig_floor) {
  if (style.channels() != whitened.channels) throw ArgumentError("color: statistics do not match the feature");
  const Eigen::MatrixXd c = spectral_map(style, eig_floor.value_or(style.default_floor()), 0.5, nullptr);
  RowMatrix out = c * whitened.values;
  out.colwise() += style.mean;
  return FeatureMap(whitened.channels, whitened.height, whitened.width, std::move(out));
}

FeatureMap wct_transfer(const FeatureMap& content, const FeatureMap& style, double alpha) {
  require_same_channels(content, style, "wct_transfer");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("wct_transfer: alpha must lie in [0, 1]");
  if (alpha == 0.0) return content;
  const FeatureMap transferred = color(whiten(content, compute_stats(content)), compute_stats(style));
  if (alpha == 1.0) return transferred;
  return FeatureMap(content.channels, content.height, content.width,
                    alpha * transferred.values + (1.0 - alpha) * content.values);
}

FeatureMap adain_transfer(const FeatureMap& content, const FeatureMap& style, double eps) {
  require_same_channels(content, style, "adain_transfer");
  FeatureMap out(content.channels, content.height, content.width);
  for (int c = 0; c < content.channels; ++c) {
    const ChannelMoments mc = moments(content.values.row(c));
    const ChannelMoments ms = moments(style.values.row(c));
    const double denom = mc.sigma + eps;
    if (mc.constant || denom <= 0.0) {
      out.values.row(c).setConstant(ms.mean);
      continue;
    }
    out.values.row(c) = ((content.values.row(c).array() - mc.mean) * (ms.sigma / denom) + ms.mean).matrix();
  }
  return out;
}

AdainGrads adain_backward(const FeatureMap& content, const FeatureMap& style, const FeatureMap& grad_output,
                          double eps) {
  require_same_channels(content, style, "adain_backward");
  AdainGrads g{FeatureMap(content.channels, content.height, content.width),
               FeatureMap(style.channels, style.height, style.width)};
  const double nc = content.spatial();
  const double ns = style.spatial();
  for (int c = 0; c < content.channels; ++c) {
    const ChannelMoments mc = moments(content.values.row(c));
    const ChannelMoments ms = moments(style.values.row(c));
    const Eigen::ArrayXd go = grad_output.values.row(c).transpose().array();
    const double denom = mc.sigma + eps;
    const bool flat = mc.constant || denom <= 0.0;

    const Eigen::ArrayXd centered = content.values.row(c).transpose().array() - mc.mean;
    const Eigen::ArrayXd xhat = flat ? Eigen::ArrayXd::Zero(centered.size()) : Eigen::ArrayXd(centered / denom);

    // Style side: output depends on mu_s (weight 1) and sigma_s (weight xhat).
    const double d_mu_s = go.sum();
    const double d_sigma_s = (go * xhat).sum();
    const Eigen::ArrayXd s_centered = style.values.row(c).transpose().array() - ms.mean;
    Eigen::ArrayXd gs = Eigen::ArrayXd::Constant(s_centered.size(), d_mu_s / ns);
    if (!ms.constant) gs += d_sigma_s * s_centered / (ns * ms.sigma);
    g.style.values.row(c) = gs.matrix().transpose();

    if (flat) continue;
    // Content side: y = sigma_s * (x - mu_c) / (sigma_c + eps).
    const double a = ms.sigma;
    Eigen::ArrayXd gc = a / denom * (go - go.mean());
    const double d_sigma_c = -a / (denom * denom) * (go * centered).sum();
    gc += d_sigma_c * centered / (nc * mc.sigma);
    g.content.values.row(c) = gc.matrix().transpose();
  }
  return g;
}

Tensor adain_transfer(const Tensor& content, const Tensor& style, double eps) {
  if (content.n() != style.n() || content.c() != style.c()) throw ArgumentError("adain_transfer: batch mismatch");
  Tensor out(content.n(), content.c(), content.h(), content.w());
  for (int b = 0; b < content.n(); ++b) out.set_feature(b, adain_transfer(content.feature(b), style.feature(b), eps));
  return out;
}

double style_distance(const Tensor& stylized, const Tensor& style, const Network& eval_encoder, int stage) {
  if (stage < 1 || stage > eval_encoder.spec().max_stage) throw ArgumentError("style_distance: stage out of range");
  if (stylized.n() != 1 || style.n() != 1) throw ArgumentError("style_distance: expects single images");
  const FeatureMap a = eval_encoder.encode(stylized, nullptr, stage).output().feature(0);
  const FeatureMap b = eval_encoder.encode(style, nullptr, stage).output().feature(0);
  return (gram(a, true) - gram(b, true)).norm();
}

int count_significant_eigenvalues(const Eigen::MatrixXd& symmetric, double rel_threshold) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetric, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& d = eig.eigenvalues();
  if (d.size() == 0) return 0;
  const double top = d.maxCoeff();
  if (top <= 0.0) return 0;
  return static_cast<int>((d.array() > rel_threshold * top).count());
}

}  // namespace cdist
