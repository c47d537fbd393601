#include "doctest.h"

#include <cmath>
#include <random>

#include "foldlab/canrel.hpp"
#include "foldlab/errors.hpp"

using namespace foldlab;
using namespace foldlab::canrel;

TEST_CASE("singular radius examples") {
  const auto v = singular_radius(1.0, 0.0);
  REQUIRE(v.exists);
  CHECK(v.q_root == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(v.radius == doctest::Approx(std::pow(2.0, -1.0 / 6.0)).epsilon(1e-14));
  CHECK(std::abs(2.0 * v.q_root * v.q_root - 4.0) < 1e-12);
  CHECK(std::abs(phase::heisenberg_det(1.0, geometry::DiagonalB::zero(1), v.radius, 1.0)) < 1e-10);

  const auto w = singular_radius(1.0, 1.0);
  CHECK(w.q_root == doctest::Approx((-1.0 + std::sqrt(17.0)) / 2.0).epsilon(1e-14));
  CHECK(std::abs(2.0 * w.q_root * w.q_root + 2.0 * w.q_root - 8.0) < 1e-12);
}

TEST_CASE("variety radius plug-back on random parameters") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> bu(0.3, 3.0), bb(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    const double beta = bu(rng), b1 = bb(rng);
    const auto v = singular_radius(beta, b1);
    REQUIRE(v.exists);
    // scale the determinant by its Q^2 term so the tolerance is meaningful
    const double det = phase::heisenberg_det(beta, geometry::DiagonalB({b1}), v.radius, 1.0);
    const double scale = beta * beta * (beta + 1.0) * v.q_root * v.q_root;
    CHECK(std::abs(det) / scale < 1e-10);
  }
}

TEST_CASE("variety_radius finds the sign change along a ray") {
  const auto ph = phase::PhaseSpec::cond_ii(1.0, geometry::DiagonalB::zero(1), 1.0);
  Eigen::VectorXd x(2), u(2);
  x << 0.1, 0.2;
  u << 0.6, 0.8;
  CHECK(variety_radius(ph, x, u) == doctest::Approx(std::pow(2.0, -1.0 / 6.0)).epsilon(1e-10));
  CHECK(variety_radius(phase::PhaseSpec::radial(1.0, 1), x, u) == 0.0);
}

TEST_CASE("determinant gradient is normal to the variety") {
  const auto ph = phase::PhaseSpec::cond_ii(1.0, geometry::DiagonalB::zero(1), 1.0);
  const double rstar = singular_radius(1.0, 0.0).radius;
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> c(-1.0, 1.0), a(0.0, 6.283185307179586);
  double worst_angle = 0.0, worst_along = 0.0;
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x(2), u(2);
    x << c(rng), c(rng);
    const double t = a(rng);
    u << std::cos(t), std::sin(t);
    const Eigen::VectorXd g = det_gradient(ph, x, x - rstar * u);
    Eigen::VectorXd n(4);
    n << u, -u;
    n.normalize();
    worst_angle = std::max(worst_angle, std::acos(std::min(1.0, std::abs(g.dot(n)) / g.norm())));
    // off the variety: no component along (u, u)
    const Eigen::VectorXd g2 = det_gradient(ph, x, x - 1.3 * u);
    Eigen::VectorXd m(4);
    m << u, u;
    worst_along = std::max(worst_along, std::abs(g2.dot(m)) / g2.norm());
  }
  CHECK(worst_angle < 1e-4);
  CHECK(worst_along < 1e-8);
}

TEST_CASE("scalar factor: gradient vanishes at b1 = -(beta+1) Q and |det| >= 4^n there") {
  // d/dQ of b^2(b+1)Q^2 + 2 b^2 b1 Q - 4 b1^2 - 4 vanishes at Q = -b1/(b+1)
  const double beta = 1.0, Q = 0.8, b1 = -(beta + 1.0) * Q;
  const double r = std::pow(Q, -1.0 / (beta + 2.0));
  auto f = [&](double q) {
    return beta * beta * (beta + 1.0) * q * q + 2.0 * beta * beta * b1 * q - 4.0 * b1 * b1 - 4.0;
  };
  const double h = 1e-6;
  CHECK(std::abs((f(Q + h) - f(Q - h)) / (2 * h)) < 1e-6);
  const double det = phase::heisenberg_det(beta, geometry::DiagonalB({b1}), r, 1.0);
  CHECK(std::abs(det) >= 4.0);
}

TEST_CASE("fold conditions hold on the variety and survive a cubic perturbation") {
  for (double rho : {0.0, 1e-3}) {
    const auto ph = phase::PhaseSpec::cond_ii(1.0, geometry::DiagonalB::zero(1), 1.0, rho);
    const FoldReport r = check_fold(ph);
    CHECK(r.exists);
    CHECK(r.points_tested == 50);
    CHECK(r.corank_ok);
    CHECK(r.first_order_ok);
    CHECK(r.transversality_ok);
    CHECK(r.min_rank == 1);
    CHECK(r.max_rank == 1);
    CHECK(r.min_margin >= 0.1);
    CHECK(r.min_first_order_ratio >= 1e-3);
    CHECK(r.det_gradient_direction_error < 1e-4);
  }
}

TEST_CASE("rank on the variety is exactly d-1 across a parameter grid") {
  for (double beta : {0.5, 1.0, 2.0}) {
    for (double b1 : {-1.0, 0.0, 0.5, 2.0}) {
      for (int n : {1, 2}) {
        FoldOptions o;
        o.samples = 10;
        const auto r = check_fold(phase::PhaseSpec::cond_ii(beta, geometry::DiagonalB(std::vector<double>(n, b1)), 1.0), o);
        INFO("beta=", beta, " b1=", b1, " n=", n);
        CHECK(r.exists);
        CHECK(r.min_rank == 2 * n - 1);
        CHECK(r.max_rank == 2 * n - 1);
        CHECK(r.passed());
      }
    }
  }
}

TEST_CASE("nondegenerate phase has an empty variety") {
  const FoldReport r = check_fold(phase::PhaseSpec::bilinear(2));
  CHECK_FALSE(r.exists);
  CHECK(r.passed());
}

TEST_CASE("curve fold point") {
  const auto a = curve_fold_check(1.0, 2, 1.0);
  CHECK(std::abs(a.x0 - 1.0) < 1e-8);
  CHECK(std::abs(a.third_derivative + 6.0) < 1e-6);

  const auto b = curve_fold_check(1.0, 3, 1.0);
  const double x0 = std::pow(3.0, -0.25);
  CHECK(b.x0 == doctest::Approx(x0).epsilon(1e-10));
  CHECK(b.third_derivative == doctest::Approx(-6.0 * std::pow(x0, -4.0) - 6.0).epsilon(1e-9));
  CHECK(std::abs(curve_second_derivative(1.0, 3, 1.0, b.x0)) < 1e-9);

  CHECK_THROWS_AS(curve_fold_check(1.0, 2, 0.0), DomainError);
  CHECK_THROWS_AS(curve_fold_check(1.0, 2, 1e-12, 10.0), DomainError);
}
