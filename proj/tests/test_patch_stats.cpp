#include <doctest.h>

#include <Eigen/Cholesky>
#include <cmath>
#include <numeric>

#include "pda/error.hpp"
#include "pda/patch_stats.hpp"

using namespace pda;

namespace {

Eigen::MatrixXd random_spd(int m, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = n(rng);
  return a * a.transpose() / m + 0.1 * Eigen::MatrixXd::Identity(m, m);
}

}  // namespace

TEST_CASE("fit_patch_gaussian") {
  SUBCASE("identical constant images") {
    const std::vector<Image> corpus(3, Image(6, 6, 3, 0.5));
    const auto pg = fit_patch_gaussian(corpus, 3, 200, 1e-4, 1);
    CHECK(pg.dimension() == 27);
    for (int i = 0; i < 27; ++i) CHECK(pg.mean(i) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK((pg.covariance - 1e-4 * Eigen::MatrixXd::Identity(27, 27)).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("two constant images, edge 1") {
    const std::vector<Image> corpus{Image(1, 1, 1, 0.0), Image(1, 1, 1, 1.0)};
    const auto pg = fit_patch_gaussian(corpus, 1, 100, 1e-4, 0);
    CHECK(pg.mean(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(pg.covariance(0, 0) == doctest::Approx(0.25 * 2.0 / (2 - 1) + 1e-4).epsilon(1e-14));
    CHECK(pg.sample_count == 2);
  }
  SUBCASE("dimension at win 15, pad 2 on RGB") {
    PatchGaussian pg;
    pg.patch_edge = 15 + 2 * 2;
    pg.channels = 3;
    CHECK(pg.dimension() == 1083);
  }
  SUBCASE("near-constant corpus still factors") {
    Rng rng(1);
    std::vector<Image> corpus;
    for (int i = 0; i < 4; ++i) {
      Image img(12, 12, 1, 0.4);
      for (auto& v : img.pixels()) v += 1e-9 * uniform01(rng);
      corpus.push_back(img);
    }
    const auto pg = fit_patch_gaussian(corpus, 5, 400, 1e-4, 3);
    CHECK((pg.covariance - pg.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::LLT<Eigen::MatrixXd> llt(pg.covariance);
    CHECK(llt.info() == Eigen::Success);
  }
  SUBCASE("errors and determinism") {
    const std::vector<Image> corpus{Image(4, 4, 1, 0.1), Image(4, 4, 3, 0.1)};
    CHECK_THROWS_AS(fit_patch_gaussian(corpus, 2, 10), Error);
    CHECK_THROWS_AS(fit_patch_gaussian(std::vector<Image>{Image(2, 2, 1)}, 3, 10), Error);
    Rng rng(8);
    std::vector<Image> noisy;
    for (int i = 0; i < 3; ++i) {
      Image img(20, 20, 1);
      for (auto& v : img.pixels()) v = uniform01(rng);
      noisy.push_back(img);
    }
    const auto a = fit_patch_gaussian(noisy, 4, 50, 1e-4, 9);
    const auto b = fit_patch_gaussian(noisy, 4, 50, 1e-4, 9);
    CHECK(a.covariance == b.covariance);
    CHECK(a.sample_count == 50);
  }
}

TEST_CASE("PGS1 round trip") {
  Rng rng(2);
  PatchGaussian pg;
  pg.patch_edge = 2;
  pg.channels = 1;
  pg.mean = Eigen::VectorXd::Random(4);
  pg.covariance = random_spd(4, rng);
  pg.covariance = (pg.covariance + pg.covariance.transpose()) / 2;
  pg.epsilon = 1e-4;
  pg.sample_count = 17;
  const auto back = parse_pgs(format_pgs(pg));
  CHECK(back.mean == pg.mean);
  CHECK(back.covariance == pg.covariance);
  CHECK(back.sample_count == 17);
  CHECK_THROWS_AS(parse_pgs("PGS1 2 1\n0 0\n"), Error);
}

TEST_CASE("gaussian conditioning") {
  SUBCASE("bivariate closed form") {
    for (double rho : {-0.9, 0.0, 0.5}) {
      Eigen::Vector2d mu(0.3, -0.7);
      Eigen::Matrix2d cov;
      cov << 1.0, rho, rho, 1.0;
      const GaussianConditioner g(mu, cov, {0}, {1});
      const double xb = 0.45;
      const auto c = g.condition(std::vector<double>{xb});
      CHECK(std::abs(c.mean(0) - (mu(0) + rho * (xb - mu(1)))) < 1e-10);
      CHECK(std::abs(c.factor(0, 0) * c.factor(0, 0) - (1 - rho * rho)) < 1e-10);
    }
  }
  SUBCASE("diagonal covariance and zero innovation") {
    Rng rng(6);
    const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(5, 0.1, 0.9);
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(5, 5);
    diag.diagonal() << 0.1, 0.2, 0.3, 0.4, 0.5;
    const GaussianConditioner d(mu, diag, {1, 3}, {0, 2, 4});
    const auto c = d.condition(std::vector<double>{0.7, 0.0, 1.0});
    CHECK(c.mean(0) == doctest::Approx(mu(1)).epsilon(1e-15));
    CHECK(c.mean(1) == doctest::Approx(mu(3)).epsilon(1e-15));
    const Eigen::MatrixXd cc = c.factor * c.factor.transpose();
    CHECK(cc(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(std::abs(cc(0, 1)) < 1e-15);

    const auto cov = random_spd(5, rng);
    const GaussianConditioner full(mu, cov, {0, 4}, {1, 2, 3});
    const auto z = full.condition(std::vector<double>{mu(1), mu(2), mu(3)});
    CHECK(std::abs(z.mean(0) - mu(0)) < 1e-14);
    CHECK(std::abs(z.mean(1) - mu(4)) < 1e-14);
  }
  SUBCASE("schur complement against a direct inverse") {
    Rng rng(12);
    const auto cov = random_spd(6, rng);
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(6, 0.5);
    const std::vector<int> a{1, 2}, b{0, 3, 4, 5};
    const GaussianConditioner g(mu, cov, a, b);
    Eigen::MatrixXd saa(2, 2), sab(2, 4), sbb(4, 4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) saa(i, j) = cov(a[i], a[j]);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) sab(i, j) = cov(a[i], b[j]);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) sbb(i, j) = cov(b[i], b[j]);
    const Eigen::MatrixXd schur = saa - sab * sbb.inverse() * sab.transpose();
    const Eigen::MatrixXd got = g.factor() * g.factor().transpose();
    CHECK((got - schur).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g.gain() - sab * sbb.inverse()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("singular border block") {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Ones();
    CHECK_THROWS_AS(GaussianConditioner(Eigen::Vector3d::Zero(), cov, {0}, {1, 2}), Error);
  }
  SUBCASE("law of total expectation") {
    Rng rng(30);
    const auto cov = random_spd(3, rng) * 0.01;
    const Eigen::Vector3d mu(0.4, 0.5, 0.6);
    const GaussianConditioner g(mu, cov, {0}, {1, 2});
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd l = llt.matrixL();
    std::normal_distribution<double> n(0.0, 1.0);
    const int draws = 100000;
    double sum = 0.0, sum_sq = 0.0;
    Eigen::VectorXd cm;
    for (int i = 0; i < draws; ++i) {
      const Eigen::Vector3d x = mu + l * Eigen::Vector3d(n(rng), n(rng), n(rng));
      g.conditional_mean(std::vector<double>{x(1), x(2)}, cm);
      sum += cm(0);
      sum_sq += cm(0) * cm(0);
    }
    const double mean = sum / draws;
    const double sd = std::sqrt(std::max(sum_sq / draws - mean * mean, 0.0));
    CHECK(std::abs(mean - mu(0)) < 4.0 * sd / std::sqrt(static_cast<double>(draws)));
  }
}

TEST_CASE("sampling the inner pixels") {
  SUBCASE("zero factor returns the mean") {
    ConditionalGaussian c{{0, 1}, Eigen::Vector2d(0.3, 0.7), Eigen::Matrix2d::Zero()};
    Rng rng(1);
    for (int i = 0; i < 10; ++i) CHECK(sample_inner(c, rng) == c.mean);
  }
  SUBCASE("same state, same sample; values clamped") {
    Rng rng(4);
    const ConditionalGaussian c{{0, 1, 2}, Eigen::Vector3d(0.5, 0.0, 1.0), random_spd(3, rng)};
    Rng a(77), b(77);
    const auto sa = sample_inner(c, a);
    CHECK(sa == sample_inner(c, b));
    for (int i = 0; i < 3; ++i) {
      CHECK(sa(i) >= 0.0);
      CHECK(sa(i) <= 1.0);
    }
  }
  SUBCASE("one-dimensional statistical check") {
    ConditionalGaussian c{{0}, Eigen::VectorXd::Constant(1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.05)};
    Rng rng(2024);
    const int draws = 100000;
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) sum += sample_inner(c, rng)(0);
    CHECK(std::abs(sum / draws - 0.5) < 4.0 * 0.05 / std::sqrt(static_cast<double>(draws)));
  }
}

TEST_CASE("discrete distributions") {
  SUBCASE("validation") {
    CHECK_THROWS_AS(DiscreteDistribution({0.0, 1.0}, {0.3, 0.8}), Error);
    CHECK_THROWS_AS(DiscreteDistribution({0.0, 1.5}, {0.5, 0.5}), Error);
    CHECK_THROWS_AS(DiscreteDistribution({0.0}, {0.0}), Error);
    CHECK_THROWS_AS(DiscreteDistribution({0.0, 1.0}, {1.0}), Error);
  }
  SUBCASE("two inner pixels over {0,1}") {
    const DiscreteDistribution d({0.0, 1.0}, {0.5, 0.5});
    const auto all = d.enumerate(2);
    REQUIRE(all.size() == 4);
    for (const auto& a : all) CHECK(a.weight == 0.25);
    CHECK(all[1].values == std::vector<double>{0.0, 1.0});
    CHECK(all[2].values == std::vector<double>{1.0, 0.0});
  }
  SUBCASE("weights sum to one for small supports") {
    Rng rng(3);
    for (int s = 1; s <= 4; ++s) {
      std::vector<double> support(s), w(s);
      for (int i = 0; i < s; ++i) {
        support[i] = i / 4.0;
        w[i] = 1.0 + uniform01(rng);
      }
      const double tot = std::accumulate(w.begin(), w.end(), 0.0);
      for (auto& x : w) x /= tot;
      const double fix = 1.0 - std::accumulate(w.begin(), w.end() - 1, 0.0);
      w.back() = fix;
      const DiscreteDistribution d(support, w);
      for (int m = 1; m <= 8; ++m) {
        double total = 0.0;
        std::uint64_t count = 0;
        d.for_each_assignment(m, [&](std::span<const double>, double weight) {
          total += weight;
          ++count;
        });
        CHECK(std::abs(total - 1.0) < 1e-12);
        CHECK(count == d.assignment_count(m, UINT64_MAX));
      }
    }
    const DiscreteDistribution d({0.0, 0.5, 1.0}, {0.2, 0.3, 0.5});
    CHECK(d.assignment_count(100, 1000000) == 0);
    CHECK(d.assignment_count(12, 1000000) == 531441);
  }
  SUBCASE("sampling frequencies") {
    const DiscreteDistribution d({0.0, 0.5, 1.0}, {0.2, 0.3, 0.5});
    Rng rng(5);
    int hits[3] = {0, 0, 0};
    for (int i = 0; i < 30000; ++i) {
      const double v = d.sample(rng);
      hits[v == 0.0 ? 0 : v == 0.5 ? 1 : 2]++;
    }
    CHECK(hits[0] / 30000.0 == doctest::Approx(0.2).epsilon(0.05));
    CHECK(hits[2] / 30000.0 == doctest::Approx(0.5).epsilon(0.05));
  }
}
