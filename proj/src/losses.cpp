#include "cdist/losses.hpp"

#include "cdist/error.hpp"
#include "cdist/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cdist {
namespace {

// mean((a - b)^2) and its gradient with respect to a, scaled by `weight`.
double mse_with_grad(const Tensor& a, const Tensor& b, double weight, Tensor* grad) {
  if (!a.same_shape(b)) throw ArgumentError("loss operands have different shapes");
  const double n = static_cast<double>(a.size());
  double acc = 0.0;
  *grad = Tensor(a.n(), a.c(), a.h(), a.w());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
    grad->data()[i] = weight * 2.0 * d / n;
  }
  return acc / n;
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_p >= 0.0) || !(lambda_s >= 0.0) || !(beta >= 0.0))
    throw ArgumentError("loss weights must be non-negative");
}

EmbeddingMap EmbeddingMap::initialized(int teacher_channels, int student_channels, int tap_stage, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(3.0 / student_channels);
  std::uniform_real_distribution<double> dist(-bound, bound);
  EmbeddingMap m;
  m.tap_stage = tap_stage;
  m.q.resize(teacher_channels, student_channels);
  for (Eigen::Index i = 0; i < m.q.size(); ++i) m.q.data()[i] = dist(rng);
  return m;
}

EmbeddingMap EmbeddingMap::identity(int channels, int tap_stage) {
  return EmbeddingMap{Eigen::MatrixXd::Identity(channels, channels), tap_stage};
}

Tensor EmbeddingMap::apply(const Tensor& student) const {
  if (student.c() != student_channels()) throw ArgumentError("embedding: student channel count mismatch");
  Tensor out(student.n(), teacher_channels(), student.h(), student.w());
  for (int b = 0; b < student.n(); ++b) out.matrix(b).noalias() = q * student.matrix(b);
  return out;
}

Tensor EmbeddingMap::backward(const Tensor& student, const Tensor& grad_output, Eigen::MatrixXd* grad_q) const {
  Tensor grad(student.n(), student.c(), student.h(), student.w());
  for (int b = 0; b < student.n(); ++b) {
    if (grad_q != nullptr) grad_q->noalias() += grad_output.matrix(b) * student.matrix(b).transpose();
    grad.matrix(b).noalias() = q.transpose() * grad_output.matrix(b);
  }
  return grad;
}

ReconstructionLoss reconstruction_loss(const Tensor& recon, const Tensor& original, const FeatureTaps& taps_recon,
                                       const FeatureTaps& taps_original, int k, const LossWeights& w) {
  w.validate();
  if (k < 1 || k > taps_recon.size() || k > taps_original.size())
    throw ArgumentError("reconstruction_loss: stage k exceeds the available taps");
  ReconstructionLoss out;
  out.pixel = mse_with_grad(recon, original, 1.0, &out.grad_image);
  for (int i = 1; i <= k; ++i) {
    Tensor g;
    out.perceptual += mse_with_grad(taps_recon.stage(i), taps_original.stage(i), w.lambda_p, &g);
    out.grad_taps.push_back(std::move(g));
  }
  out.total = out.pixel + w.lambda_p * out.perceptual;
  return out;
}

StylizationLoss stylization_loss(const FeatureTaps& taps_stylized, const FeatureTaps& taps_content,
                                 const FeatureTaps& taps_style, const LossWeights& w) {
  w.validate();
  const int stages = std::min({4, taps_stylized.size(), taps_content.size(), taps_style.size()});
  if (stages < 1) throw ArgumentError("stylization_loss: no feature taps");
  StylizationLoss out;
  for (int i = 1; i <= stages; ++i) {
    const Tensor& st = taps_stylized.stage(i);
    out.grad_taps.emplace_back(st.n(), st.c(), st.h(), st.w());
  }

  Tensor content_grad;
  out.content = mse_with_grad(taps_stylized.stage(stages), taps_content.stage(stages), 1.0, &content_grad);
  out.grad_taps[stages - 1] += content_grad;

  for (int i = 1; i <= stages; ++i) {
    const Tensor& st = taps_stylized.stage(i);
    const Tensor& sy = taps_style.stage(i);
    if (st.n() != sy.n() || st.c() != sy.c()) throw ArgumentError("stylization_loss: style batch mismatch");
    const double batch = st.n();
    const double elems = static_cast<double>(st.c()) * st.c();
    for (int b = 0; b < st.n(); ++b) {
      const FeatureMap f = st.feature(b);
      const Eigen::MatrixXd diff = gram(f, true) - gram(sy.feature(b), true);
      out.style += diff.squaredNorm() / elems / batch;
      const Eigen::MatrixXd dg = w.lambda_s * 2.0 * diff / elems / batch;
      out.grad_taps[i - 1].matrix(b) += gram_backward(f, dg, true);
    }
  }
  out.total = out.content + w.lambda_s * out.style;
  return out;
}

EmbeddingLoss embedding_loss(const Tensor& teacher, const Tensor& student, const EmbeddingMap& q) {
  if (teacher.n() != student.n() || teacher.h() != student.h() || teacher.w() != student.w())
    throw ArgumentError("embedding_loss: teacher and student features differ in batch or spatial size");
  if (teacher.c() != q.teacher_channels() || student.c() != q.student_channels())
    throw ArgumentError("embedding_loss: Q is " + std::to_string(q.teacher_channels()) + "x" +
                        std::to_string(q.student_channels()) + " but features have " + std::to_string(teacher.c()) +
                        " and " + std::to_string(student.c()) + " channels");
  const double n = static_cast<double>(teacher.size());
  EmbeddingLoss out;
  out.grad_q = Eigen::MatrixXd::Zero(q.q.rows(), q.q.cols());
  out.grad_student = Tensor(student.n(), student.c(), student.h(), student.w());
  for (int b = 0; b < teacher.n(); ++b) {
    const RowMatrix residual = teacher.matrix(b) - q.q * student.matrix(b);
    out.value += residual.squaredNorm() / n;
    const RowMatrix dr = -2.0 / n * residual;  // d loss / d (Q F')
    out.grad_q.noalias() += dr * student.matrix(b).transpose();
    out.grad_student.matrix(b).noalias() = q.q.transpose() * dr;
  }
  return out;
}

double total_distill_loss(std::span<const double> embed_terms, double collab_term, double beta) {
  double s = 0.0;
  for (double e : embed_terms) s += e;
  return beta * s + collab_term;
}

}  // namespace cdist
