#include "cdist/error.hpp"
#include "cdist/losses.hpp"
#include "cdist/transforms.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cdist;

namespace {

double sq_mean(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.size());
}

Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("loss weights") {
  CHECK(LossWeights{}.lambda_p == 1.0);
  CHECK(LossWeights{}.lambda_s == 10.0);
  CHECK(LossWeights{}.beta == 10.0);
  CHECK_THROWS_AS((LossWeights{-1.0, 1.0, 1.0}).validate(), ArgumentError);
}

TEST_CASE("reconstruction loss") {
  std::mt19937_64 rng(1);
  const Network enc = build_encoder(ArchSpec::from_layout({{2}, {3}}), 2);
  const Tensor a = testutil::random_tensor(2, 3, 4, 4, rng), b = testutil::random_tensor(2, 3, 4, 4, rng);
  const FeatureTaps ta = enc.encode(a), tb = enc.encode(b);
  CHECK(reconstruction_loss(a, a, ta, ta, 2, {}).total == 0.0);

  SUBCASE("pixel only") {
    Tensor x(1, 3, 2, 2, 0.0), y(1, 3, 2, 2, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = std::sqrt(0.5);
    const FeatureTaps t = build_encoder(ArchSpec::from_layout({{2}}), 1).encode(x);
    CHECK(reconstruction_loss(x, y, t, t, 1, {0.0, 10.0, 10.0}).total == doctest::Approx(0.5));
  }
  SUBCASE("term by term oracle") {
    const LossWeights w{0.7, 10.0, 10.0};
    const ReconstructionLoss l = reconstruction_loss(a, b, ta, tb, 2, w);
    const double expect = sq_mean(a, b) + 0.7 * (sq_mean(ta.stage(1), tb.stage(1)) + sq_mean(ta.stage(2), tb.stage(2)));
    CHECK(l.total == doctest::Approx(expect).epsilon(1e-10));
    CHECK(l.pixel == doctest::Approx(sq_mean(a, b)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(reconstruction_loss(a, testutil::random_tensor(1, 3, 4, 4, rng), ta, tb, 2, {}), ArgumentError);
}

TEST_CASE("stylization loss") {
  std::mt19937_64 rng(2);
  const Network enc = build_encoder(ArchSpec::from_layout({{2}, {3}}), 3);
  const Tensor st = testutil::random_tensor(2, 3, 4, 4, rng), c = testutil::random_tensor(2, 3, 4, 4, rng),
               s = testutil::random_tensor(2, 3, 4, 4, rng);
  const FeatureTaps tst = enc.encode(st), tc = enc.encode(c), ts = enc.encode(s);
  CHECK(stylization_loss(tc, tc, tc, {}).total == 0.0);
  CHECK(stylization_loss(tst, tc, ts, {1, 0, 1}).total == doctest::Approx(sq_mean(tst.stage(2), tc.stage(2))));

  // Oracle built from gram(): per image, mean squared Gram difference, then batch mean.
  double style = 0;
  for (int k = 1; k <= 2; ++k)
    for (int n = 0; n < 2; ++n) {
      const Eigen::MatrixXd d = gram(tst.stage(k).feature(n), true) - gram(ts.stage(k).feature(n), true);
      style += d.squaredNorm() / static_cast<double>(d.size()) / 2.0;
    }
  const StylizationLoss l = stylization_loss(tst, tc, ts, {});
  CHECK(l.total == doctest::Approx(sq_mean(tst.stage(2), tc.stage(2)) + 10.0 * style).epsilon(1e-10));
}

TEST_CASE("embedding loss") {
  std::mt19937_64 rng(3);
  const Tensor fs = testutil::random_tensor(2, 2, 3, 3, rng, -1, 1);
  EmbeddingMap q = EmbeddingMap::initialized(3, 2, 1, 5);
  CHECK(embedding_loss(q.apply(fs), fs, q).value == doctest::Approx(0.0).epsilon(1e-30));

  const Tensor ft = testutil::random_tensor(2, 3, 3, 3, rng, -1, 1);
  EmbeddingMap zero{Eigen::MatrixXd::Zero(3, 2), 1};
  CHECK(embedding_loss(ft, fs, zero).value == doctest::Approx(sq_mean(ft, Tensor(2, 3, 3, 3))));

  SUBCASE("gradients") {
    Tensor s = fs;
    const EmbeddingLoss l = embedding_loss(ft, s, q);
    auto f = [&] { return embedding_loss(ft, s, q).value; };
    CHECK(testutil::relative_error(std::span<const double>(l.grad_q.data(), l.grad_q.size()),
                                   testutil::numeric_gradient(std::span<double>(q.q.data(), q.q.size()), f)) < 1e-5);
    CHECK(testutil::relative_error(l.grad_student.span(), testutil::numeric_gradient(s.span(), f)) < 1e-5);
  }
  SUBCASE("invariant under an orthogonal change of basis") {
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(2, 2, rng));
      const Eigen::MatrixXd r = qr.householderQ();
      EmbeddingMap rotated{q.q * r, 1};
      Tensor s2 = fs;
      for (int n = 0; n < s2.n(); ++n) s2.matrix(n) = r.transpose() * fs.matrix(n);
      CHECK(embedding_loss(ft, s2, rotated).value == doctest::Approx(embedding_loss(ft, fs, q).value).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(embedding_loss(ft, testutil::random_tensor(2, 2, 2, 2, rng), q), ArgumentError);
  CHECK_THROWS_AS(embedding_loss(ft, testutil::random_tensor(2, 3, 3, 3, rng), q), ArgumentError);
}

TEST_CASE("total distillation loss") {
  const double embed[] = {0.1, 0.2};
  CHECK(total_distill_loss(embed, 1.0, 10.0) == doctest::Approx(4.0));
  CHECK(total_distill_loss(embed, 1.0, 0.0) == 1.0);
  const double zeros[] = {0.0, 0.0};
  CHECK(total_distill_loss(zeros, 0.0, 10.0) == 0.0);
}

TEST_CASE("embedding map helpers") {
  const EmbeddingMap id = EmbeddingMap::identity(4, 2);
  CHECK(id.q.isIdentity());
  const EmbeddingMap a = EmbeddingMap::initialized(8, 2, 1, 3), b = EmbeddingMap::initialized(8, 2, 1, 3);
  CHECK(a.q == b.q);
  CHECK(a.q.cwiseAbs().maxCoeff() <= std::sqrt(3.0 / 2.0));
}
