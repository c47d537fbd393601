#include "doctest.h"

#include <random>

#include "foldlab/errors.hpp"
#include "foldlab/geometry.hpp"
#include "foldlab/phase.hpp"

using namespace foldlab;
using namespace foldlab::geometry;

namespace {

HeisenbergElement random_element(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::VectorXd x(2 * n);
  for (int i = 0; i < 2 * n; ++i) x[i] = u(rng);
  return {Vec2n(x), u(rng)};
}

bool close(const HeisenbergElement& a, const HeisenbergElement& b, double tol) {
  const double scale = 1.0 + a.x.coords().norm() + std::abs(a.t);
  return (a.x.coords() - b.x.coords()).norm() <= tol * scale && std::abs(a.t - b.t) <= tol * scale;
}

}  // namespace

TEST_CASE("Vec2n needs an even positive length") {
  CHECK_THROWS_AS(Vec2n({1.0, 2.0, 3.0}), InvalidArgument);
  CHECK_THROWS_AS(Vec2n(Eigen::VectorXd(0)), InvalidArgument);
  CHECK(Vec2n({1.0, 2.0, 3.0, 4.0}).n() == 2);
}

TEST_CASE("group law examples") {
  const HeisenbergElement e{Vec2n::zero(1), 0.0};
  const auto id = group_mul(e, e);
  CHECK(id.x.coords().norm() == 0.0);
  CHECK(id.t == 0.0);

  const auto p = group_mul({Vec2n({1.0, 0.0}), 0.0}, {Vec2n({0.0, 1.0}), 0.0});
  CHECK(p.x[0] == 1.0);
  CHECK(p.x[1] == 1.0);
  CHECK(p.t == doctest::Approx(-2.0));

  const auto inv = group_inv({Vec2n({1.0, 2.0}), 3.0});
  CHECK(inv.x[0] == -1.0);
  CHECK(inv.x[1] == -2.0);
  CHECK(inv.t == -3.0);
  const auto inv0 = group_inv(e);
  CHECK(inv0.x.coords().norm() == 0.0);
  CHECK(inv0.t == 0.0);
}

TEST_CASE("inverse and associativity on random elements") {
  std::mt19937_64 rng(11);
  for (int n : {1, 2, 3}) {
    const HeisenbergElement e{Vec2n::zero(n), 0.0};
    for (int i = 0; i < 100; ++i) {
      const auto p = random_element(rng, n);
      CHECK(close(group_mul(p, group_inv(p)), e, 1e-14));
      CHECK(close(group_mul(group_inv(p), p), e, 1e-14));
    }
  }
  std::mt19937_64 rng2(12);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + i % 3;
    const auto a = random_element(rng2, n), b = random_element(rng2, n), c = random_element(rng2, n);
    if (!close(group_mul(group_mul(a, b), c), group_mul(a, group_mul(b, c)), 1e-12)) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("twist is antisymmetric") {
  CHECK(twist(Vec2n({1.0, 0.0}), Vec2n({0.0, 1.0})) == 2.0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_element(rng, 2).x, y = random_element(rng, 2).x;
    CHECK(std::abs(twist(x, x)) < 1e-14);
    CHECK(twist(x, y) == doctest::Approx(-twist(y, x)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(twist(Vec2n({1.0, 0.0}), Vec2n({1.0, 0.0, 0.0, 0.0})), InvalidArgument);
}

TEST_CASE("materialized J") {
  for (int n = 1; n <= 4; ++n) {
    const Eigen::MatrixXd J = SymplecticJ(n).dense();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2 * n, 2 * n);
    CHECK((J * J + I).cwiseAbs().maxCoeff() == 0.0);
    CHECK((J * J.transpose() - I).cwiseAbs().maxCoeff() == 0.0);
    CHECK((J.transpose() + J).cwiseAbs().maxCoeff() == 0.0);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(2 * n, 1.0, 2.0 * n);
    CHECK((SymplecticJ(n).apply(v) - J * v).norm() == 0.0);
  }
}

TEST_CASE("B diagonal structure and det(2J + 2B)") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int n = 1; n <= 4; ++n) {
    std::vector<double> b(static_cast<std::size_t>(n));
    for (auto& v : b) v = u(rng);
    const DiagonalB B(b);
    const Eigen::MatrixXd D = B.dense();
    for (int i = 0; i < 2 * n; ++i)
      for (int k = 0; k < 2 * n; ++k) CHECK(D(i, k) == (i == k ? b[static_cast<std::size_t>(i % n)] : 0.0));
    double expected = 1.0;
    for (double v : b) expected *= 4.0 * v * v + 4.0;
    const double got = phase::generic_det(2.0 * SymplecticJ(n).dense() + 2.0 * D);
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(DiagonalB({1.0, 1.0}).uniform());
  CHECK_FALSE(DiagonalB({1.0, 2.0}).uniform());
}
