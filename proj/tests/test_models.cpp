#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "latentrob/models.hpp"

#include <cmath>

using namespace latentrob;

TEST_CASE("feature map examples") {
  const FeatureMap id(FeatureMapKind::Identity), sq(FeatureMapKind::SignQuadratic), la(FeatureMapKind::LeakyAbs),
      th(FeatureMapKind::Tanh);
  CHECK(id.forward(Vector(Eigen::Vector2d(1, -2))) == Vector(Eigen::Vector2d(1, -2)));
  CHECK(sq.forward(2.0) == 6.0);
  CHECK(sq.forward(-2.0) == -6.0);
  CHECK(sq.inverse(6.0) == doctest::Approx(2.0));
  CHECK(la.forward(1.0) == 1.0);
  CHECK(la.forward(-1.0) == -0.25);
  CHECK(th.inverse(0.0) == 0.0);
  CHECK(id.inverse(-3.5) == -3.5);
  CHECK_THROWS_AS(th.inverse(1.5), std::domain_error);
  CHECK(FeatureMap::parse("sign_quadratic") == sq);
  CHECK_THROWS(FeatureMap::parse("relu"));
  CHECK_FALSE(th.derivative_lower_bound().has_value());
}

TEST_CASE("property: slope lower bounds by finite differences") {
  for (auto kind : {FeatureMapKind::Identity, FeatureMapKind::LeakyAbs, FeatureMapKind::SignQuadratic}) {
    const FeatureMap f(kind);
    const double c = *f.derivative_lower_bound();
    const double h = 1e-5;
    for (double t = -10.0; t <= 10.0; t += 0.01) {
      CHECK((f.forward(t + h) - f.forward(t - h)) / (2 * h) >= c - 1e-4);
    }
  }
}

TEST_CASE("property: pull-back consistency and inverse derivative") {
  for (auto kind : {FeatureMapKind::Identity, FeatureMapKind::LeakyAbs, FeatureMapKind::SignQuadratic,
                    FeatureMapKind::Tanh}) {
    const FeatureMap f(kind);
    const double hi = kind == FeatureMapKind::Tanh ? 5.0 : 50.0;
    for (double t = -hi; t <= hi; t += 0.037) {
      CHECK(f.inverse(f.forward(t)) == doctest::Approx(t).epsilon(1e-9).scale(1.0));
      const double x = f.forward(t), h = 1e-6;
      if (kind == FeatureMapKind::Tanh && std::abs(x) > 0.999) continue;
      if (kind == FeatureMapKind::LeakyAbs && std::abs(t) < 1e-3) continue;
      const double fd = (f.inverse(x + h) - f.inverse(x - h)) / (2 * h);
      CHECK(f.inverse_derivative(x) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("links") {
  CHECK(link_cdf(Link::Logistic, 0.0) == 0.5);
  CHECK(link_cdf(Link::Probit, 0.0) == 0.5);
  CHECK(link_inverse(Link::Logistic, 0.5) == doctest::Approx(0.0).scale(1.0));
  CHECK(link_inverse(Link::Probit, 0.5) == doctest::Approx(0.0).scale(1.0));
  CHECK(link_inverse(Link::Probit, link_cdf(Link::Probit, 1.3)) == doctest::Approx(1.3).epsilon(1e-9));
  CHECK(parse_link("probit") == Link::Probit);
}

TEST_CASE("sample_gmm examples") {
  Rng rng(4);
  SUBCASE("balanced labels") {
    LatentGMM m{Matrix::Identity(2, 2), Vector::Zero(2), 0.5, {}};
    const int n = 100000;
    const auto s = sample_gmm(m, n, rng);
    int pos = 0;
    for (const auto& x : s) pos += x.y == 1;
    CHECK(std::abs(pos / double(n) - 0.5) <= 4 * std::sqrt(0.25 / n));
  }
  SUBCASE("class-conditional mean and covariance with W = I") {
    Vector mu(3);
    mu << 0.5, -1.0, 2.0;
    LatentGMM m{Matrix::Identity(3, 3), mu, 0.5, {}};
    const auto s = sample_gmm(m, 100000, rng);
    Vector sum = Vector::Zero(3);
    int np = 0;
    for (const auto& x : s) {
      if (x.y == 1) {
        sum += x.x;
        ++np;
      }
    }
    const Vector mean = sum / np;
    for (int i = 0; i < 3; ++i) CHECK(std::abs(mean(i) - mu(i)) <= 4.0 / std::sqrt(np));
  }
  SUBCASE("class-conditional covariance equals W W^T") {
    auto m = LatentGMM::random(8, 3, 0.5, FeatureMap{}, rng);
    const auto s = sample_gmm(m, 100000, rng);
    Vector mean = Vector::Zero(8);
    int np = 0;
    for (const auto& x : s) {
      if (x.y == 1) {
        mean += x.x;
        ++np;
      }
    }
    mean /= np;
    Matrix cov = Matrix::Zero(8, 8);
    for (const auto& x : s) {
      if (x.y == 1) cov += (x.x - mean) * (x.x - mean).transpose();
    }
    cov /= np - 1;
    CHECK((cov - m.w * m.w.transpose()).cwiseAbs().maxCoeff() <= 5e-2);
  }
  SUBCASE("samples lie on phi(col W)") {
    auto m = LatentGMM::random(300, 3, 0.5, FeatureMap(FeatureMapKind::SignQuadratic), rng);
    const auto s = sample_gmm(m, 20, rng);
    const Matrix p = m.w * (m.w.transpose() * m.w).inverse() * m.w.transpose();
    for (const auto& x : s) {
      const Vector u = m.phi.inverse(x.x);
      CHECK((u - p * u).norm() <= 1e-8 * std::max(1.0, u.norm()));
    }
  }
}

TEST_CASE("sample_glm examples") {
  Rng rng(9);
  SUBCASE("beta = 0") {
    LatentGLM m{Matrix::Identity(2, 2), Vector::Zero(2), Link::Logistic, {}};
    const int n = 100000;
    int pos = 0;
    for (const auto& x : sample_glm(m, n, rng)) pos += x.y == 1;
    CHECK(std::abs(pos / double(n) - 0.5) <= 4 * std::sqrt(0.25 / n));
  }
  SUBCASE("large beta aligns labels with the latent sign") {
    Vector beta = Vector::Zero(2);
    beta(0) = 10.0;
    LatentGLM m{Matrix::Identity(2, 2), beta, Link::Logistic, {}};
    int agree = 0;
    const auto s = sample_glm(m, 10000, rng, true);
    for (const auto& x : s) agree += (x.z->dot(beta) >= 0 ? 1 : -1) == x.y;
    // P(disagree) = E[logistic(-10 |z|)] ~ 0.055
    CHECK(agree / 10000.0 > 0.93);
  }
  SUBCASE("probit with beta = e1, k = 1") {
    LatentGLM m{Matrix::Identity(1, 1), Vector::Ones(1), Link::Probit, {}};
    const int n = 100000;
    int pos = 0;
    for (const auto& x : sample_glm(m, n, rng)) pos += x.y == 1;
    CHECK(std::abs(pos / double(n) - 0.5) <= 4 * std::sqrt(0.25 / n));
  }
}

TEST_CASE("generator determinism and validation") {
  Rng a(77), b(77);
  const auto ma = LatentGMM::random(5, 2, 0.3, FeatureMap{}, a);
  const auto mb = LatentGMM::random(5, 2, 0.3, FeatureMap{}, b);
  const auto sa = sample_gmm(ma, 50, a), sb = sample_gmm(mb, 50, b);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].x == sb[i].x);
    CHECK(sa[i].y == sb[i].y);
  }
  LatentGMM bad = ma;
  bad.pi = 1.0;
  CHECK_THROWS(bad.validate());
  bad = ma;
  bad.mu = Vector::Zero(3);
  CHECK_THROWS(bad.validate());
}

TEST_CASE("json round trip") {
  Rng rng(2);
  const auto g = LatentGMM::random(4, 2, 0.25, FeatureMap(FeatureMapKind::Tanh), rng);
  const auto g2 = gmm_from_json(nlohmann::json::parse(to_json(g).dump()));
  CHECK(g2.w == g.w);
  CHECK(g2.mu == g.mu);
  CHECK(g2.pi == g.pi);
  CHECK(g2.phi == g.phi);
  const auto l = LatentGLM::random(4, 3, Link::Probit, FeatureMap{}, rng);
  const auto l2 = glm_from_json(nlohmann::json::parse(to_json(l).dump()));
  CHECK(l2.w == l.w);
  CHECK(l2.beta == l.beta);
  CHECK(l2.link == Link::Probit);
}
