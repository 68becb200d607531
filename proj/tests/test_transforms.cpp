#include "cdist/error.hpp"
#include "cdist/transforms.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cdist;

namespace {

FeatureMap from_rows(std::initializer_list<std::initializer_list<double>> rows, int h, int w) {
  FeatureMap f(static_cast<int>(rows.size()), h, w);
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) f.values(r, c++) = v;
    ++r;
  }
  return f;
}

Eigen::MatrixXd covariance_oracle(const FeatureMap& f) {
  const int n = f.spatial();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(f.channels);
  for (int i = 0; i < n; ++i) mu += f.values.col(i);
  mu /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(f.channels, f.channels);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = f.values.col(i) - mu;
    cov += d * d.transpose();
  }
  return cov / (n - 1);
}

Eigen::MatrixXd random_spd(int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(c, c);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(c, c);
}

}  // namespace

TEST_CASE("gram examples") {
  CHECK(gram(from_rows({{1, 0}, {0, 1}}, 1, 2), false).isApprox(Eigen::Matrix2d::Identity()));
  Eigen::Matrix2d expect;
  expect << 5, 11, 11, 25;
  CHECK(gram(from_rows({{1, 2}, {3, 4}}, 1, 2), false).isApprox(expect));
  CHECK(gram(from_rows({{1, 2}, {3, 4}}, 1, 2), true).isApprox(expect / 4.0));
  CHECK(gram(FeatureMap(3, 2, 2), false).isZero());

  std::mt19937_64 rng(1);
  const FeatureMap f = testutil::random_feature(4, 3, 5, rng);
  const Eigen::MatrixXd g = gram(f, true);
  CHECK(g.isApprox(g.transpose(), 1e-14));
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("gram backward matches finite differences") {
  std::mt19937_64 rng(2);
  FeatureMap f = testutil::random_feature(3, 2, 3, rng);
  const Eigen::MatrixXd r = testutil::random_feature(3, 1, 3, rng).values;
  auto loss = [&] { return (gram(f, true).array() * r.array()).sum(); };
  const RowMatrix g = gram_backward(f, r, true);
  const auto num = testutil::numeric_gradient(std::span<double>(f.values.data(), f.values.size()), loss);
  CHECK(testutil::relative_error(std::span<const double>(g.data(), g.size()), num) < 1e-8);
}

TEST_CASE("compute_stats") {
  SUBCASE("constant feature") {
    FeatureMap f(2, 2, 2);
    f.values.setConstant(3.0);
    const StyleStats s = compute_stats(f);
    CHECK(s.covariance.isZero());
    CHECK(s.mean(0) == 3.0);
  }
  SUBCASE("two samples") {
    const StyleStats s = compute_stats(from_rows({{0, 2}}, 1, 2));
    CHECK(s.mean(0) == doctest::Approx(1.0));
    CHECK(s.covariance(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("brute force oracle") {
    std::mt19937_64 rng(3);
    const FeatureMap f = testutil::random_feature(3, 2, 5, rng);
    CHECK((compute_stats(f).covariance - covariance_oracle(f)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(compute_stats(FeatureMap(2, 1, 1)), DegenerateError);
}

TEST_CASE("whiten") {
  std::mt19937_64 rng(4);
  SUBCASE("identity covariance is unchanged") {
    // Columns +-e_i scaled so the (HW-1)-normalized covariance is exactly I.
    const int c = 3, n = 6;
    FeatureMap f(c, 1, n);
    const double a = std::sqrt((n - 1) / 2.0);
    for (int i = 0; i < c; ++i) {
      f.values(i, 2 * i) = a;
      f.values(i, 2 * i + 1) = -a;
    }
    const FeatureMap w = whiten(f, compute_stats(f));
    CHECK((w.values - f.values).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("full rank random") {
    const FeatureMap f = testutil::random_feature(4, 10, 10, rng);
    const FeatureMap w = whiten(f, compute_stats(f));
    CHECK((compute_stats(w).covariance - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("rank one") {
    FeatureMap f(2, 1, 20);
    for (int i = 0; i < 20; ++i) {
      const double t = std::sin(i * 0.7) + 0.1 * i;
      f.values(0, i) = t;
      f.values(1, i) = 2 * t;
    }
    const StyleStats s = compute_stats(f);
    CHECK(count_significant_eigenvalues(s.covariance) == 1);
    CHECK(compute_stats(whiten(f, s)).covariance.trace() == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("nothing retained") {
    FeatureMap f(2, 2, 2);
    f.values.setConstant(1.0);
    CHECK_THROWS_AS(whiten(f, compute_stats(f)), DegenerateError);
  }
}

TEST_CASE("color") {
  std::mt19937_64 rng(5);
  SUBCASE("zero mean identity style is the identity map") {
    const FeatureMap w = testutil::random_feature(3, 4, 4, rng);
    StyleStats s;
    s.mean = Eigen::VectorXd::Zero(3);
    s.covariance = Eigen::MatrixXd::Identity(3, 3);
    s.eigvals = Eigen::VectorXd::Ones(3);
    s.eigvecs = Eigen::MatrixXd::Identity(3, 3);
    CHECK((color(w, s).values - w.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("random SPD target") {
    const Eigen::MatrixXd target = random_spd(4, rng);
    const Eigen::LLT<Eigen::MatrixXd> llt(target);
    FeatureMap style = testutil::random_feature(4, 50, 40, rng);
    style.values = (llt.matrixL() * style.values).eval();
    const FeatureMap content = testutil::random_feature(4, 25, 40, rng);
    const StyleStats ss = compute_stats(style);
    const FeatureMap out = color(whiten(content, compute_stats(content)), ss);
    const Eigen::MatrixXd cov = compute_stats(out).covariance;
    CHECK((cov - ss.covariance).norm() / ss.covariance.norm() < 5e-2);
  }
  SUBCASE("zero style covariance gives the style mean") {
    FeatureMap style(2, 2, 2);
    style.values.setConstant(0.7);
    const FeatureMap w = testutil::random_feature(2, 2, 2, rng);
    const FeatureMap out = color(w, compute_stats(style));
    CHECK((out.values.array() - 0.7).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("wct_transfer") {
  std::mt19937_64 rng(6);
  const FeatureMap c = testutil::random_feature(3, 8, 8, rng);
  const FeatureMap s = testutil::random_feature(3, 6, 6, rng);
  CHECK(wct_transfer(c, s, 0.0).values == c.values);

  const StyleStats cs = compute_stats(c);
  const StyleStats same = compute_stats(wct_transfer(c, c, 1.0));
  CHECK((same.mean - cs.mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((same.covariance - cs.covariance).cwiseAbs().maxCoeff() < 1e-6);

  const FeatureMap out = wct_transfer(c, s, 1.0);
  CHECK((compute_stats(out).mean - compute_stats(s).mean).cwiseAbs().maxCoeff() < 1e-8);

  const StyleStats twice = compute_stats(wct_transfer(out, s, 1.0));
  CHECK((twice.covariance - compute_stats(out).covariance).cwiseAbs().maxCoeff() < 1e-6);

  CHECK_THROWS_AS(wct_transfer(c, testutil::random_feature(2, 4, 4, rng)), ArgumentError);
  CHECK_THROWS_AS(wct_transfer(c, s, 1.5), ArgumentError);
}

TEST_CASE("adain_transfer") {
  std::mt19937_64 rng(7);
  SUBCASE("hand example") {
    const FeatureMap c = from_rows({{0, 2}}, 1, 2);
    const FeatureMap s = from_rows({{2, 8}}, 1, 2);  // mean 5, population sigma 3
    const FeatureMap out = adain_transfer(c, s, 0.0);
    CHECK(out.values(0, 0) == doctest::Approx(2.0));
    CHECK(out.values(0, 1) == doctest::Approx(8.0));
  }
  SUBCASE("style equals content") {
    const FeatureMap c = testutil::random_feature(4, 5, 5, rng);
    CHECK((adain_transfer(c, c, 0.0).values - c.values).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("constant channel maps to the style mean") {
    FeatureMap c = testutil::random_feature(2, 3, 3, rng);
    c.values.row(1).setConstant(4.0);
    const FeatureMap s = testutil::random_feature(2, 3, 3, rng);
    const FeatureMap out = adain_transfer(c, s);
    CHECK((out.values.row(1).array() - s.values.row(1).mean()).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("batched form matches per image") {
    const Tensor c = testutil::random_tensor(2, 3, 4, 4, rng), s = testutil::random_tensor(2, 3, 4, 4, rng);
    const Tensor out = adain_transfer(c, s);
    for (int n = 0; n < 2; ++n) CHECK(out.feature(n).values == adain_transfer(c.feature(n), s.feature(n)).values);
  }
}

TEST_CASE("adain_backward matches finite differences") {
  std::mt19937_64 rng(8);
  FeatureMap c = testutil::random_feature(3, 3, 4, rng);
  FeatureMap s = testutil::random_feature(3, 2, 5, rng);
  FeatureMap r = testutil::random_feature(3, 3, 4, rng);
  auto loss = [&] { return (adain_transfer(c, s).values.array() * r.values.array()).sum(); };
  const AdainGrads g = adain_backward(c, s, r);
  const auto nc = testutil::numeric_gradient(std::span<double>(c.values.data(), c.values.size()), loss);
  const auto ns = testutil::numeric_gradient(std::span<double>(s.values.data(), s.values.size()), loss);
  CHECK(testutil::relative_error(std::span<const double>(g.content.values.data(), g.content.values.size()), nc) < 1e-7);
  CHECK(testutil::relative_error(std::span<const double>(g.style.values.data(), g.style.values.size()), ns) < 1e-7);
}

TEST_CASE("style_distance") {
  std::mt19937_64 rng(9);
  const Network enc = build_encoder(ArchSpec::from_layout({{2}}), 3);
  const Tensor a = testutil::random_tensor(1, 3, 8, 8, rng), b = testutil::random_tensor(1, 3, 8, 8, rng);
  CHECK(style_distance(a, a, enc, 1) == 0.0);
  CHECK(style_distance(a, b, enc, 1) == doctest::Approx(style_distance(b, a, enc, 1)).epsilon(1e-14));

  // Oracle: direct conv + ReLU, Gram by explicit sums.
  auto feats = [&](const Tensor& x) {
    const ConvParams& p = enc.convs()[0];
    Eigen::MatrixXd f(2, 64);
    for (int o = 0; o < 2; ++o)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          double acc = p.bias[o];
          for (int ci = 0; ci < 3; ++ci)
            for (int di = -1; di <= 1; ++di)
              for (int dj = -1; dj <= 1; ++dj) {
                const int ii = i + di, jj = j + dj;
                if (ii >= 0 && jj >= 0 && ii < 8 && jj < 8)
                  acc += p.weight[((o * 3 + ci) * 3 + di + 1) * 3 + dj + 1] * x.at(0, ci, ii, jj);
              }
          f(o, i * 8 + j) = std::max(acc, 0.0);
        }
    Eigen::Matrix2d g;
    for (int p1 = 0; p1 < 2; ++p1)
      for (int p2 = 0; p2 < 2; ++p2) {
        double s = 0;
        for (int k = 0; k < 64; ++k) s += f(p1, k) * f(p2, k);
        g(p1, p2) = s / (2.0 * 64.0);
      }
    return g;
  };
  CHECK(style_distance(a, b, enc, 1) == doctest::Approx((feats(a) - feats(b)).norm()).epsilon(1e-10));
  CHECK_THROWS_AS(style_distance(a, b, enc, 2), ArgumentError);
}

TEST_CASE("rank preservation under a linear embedding") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const int cs = 3, ct = 6;
    const FeatureMap fs = testutil::random_feature(cs, 4, 4, rng);
    Eigen::MatrixXd q(ct, cs);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < q.size(); ++i) q.data()[i] = g(rng);
    const FeatureMap ft(ct, 4, 4, q * fs.values);
    CHECK(count_significant_eigenvalues(gram(ft, false)) == count_significant_eigenvalues(gram(fs, false)));
  }
}
