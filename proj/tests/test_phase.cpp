#include "doctest.h"

#include <cmath>
#include <random>

#include "foldlab/errors.hpp"
#include "foldlab/phase.hpp"

using namespace foldlab;
using namespace foldlab::phase;

namespace {

struct Pair {
  Eigen::VectorXd x, y;
};

/// x in [-1,1]^d, y = x - r u with r in [0.3, 3] and u along `plane` when given.
Pair random_pair(std::mt19937_64& rng, int d, bool in_plane = false) {
  std::uniform_real_distribution<double> c(-1.0, 1.0), r(0.3, 3.0), a(0.0, 6.283185307179586);
  Eigen::VectorXd x(d), u = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) x[i] = c(rng);
  if (in_plane) {
    const double t = a(rng);
    u[0] = std::cos(t);
    u[d / 2] = std::sin(t);
  } else {
    for (int i = 0; i < d; ++i) u[i] = c(rng);
    u.normalize();
  }
  return {x, x - r(rng) * u};
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

std::vector<PhaseSpec> families(double beta, int n) {
  std::vector<double> b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = 0.3 * (i + 1) - 0.5;
  return {PhaseSpec::radial(beta, n), PhaseSpec::cond_i(beta, n, 3.5, 0.7),
          PhaseSpec::cond_ii(beta, geometry::DiagonalB(b), 1.3, 0.2), PhaseSpec::bilinear(2 * n)};
}

}  // namespace

TEST_CASE("phase values") {
  Eigen::VectorXd x(2), y(2);
  x << 2.0, 0.0;
  y << 0.0, 0.0;
  CHECK(eval(PhaseSpec::radial(1.0, 1), x, y) == doctest::Approx(0.5));
  Eigen::VectorXd a(1), b(1);
  a << 1.5;
  b << 0.5;
  CHECK(eval(PhaseSpec::curve(1.0, 2, 1.0), a, b) == doctest::Approx(0.0).scale(1.0));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_pair(rng, 4);
    const auto off = PhaseSpec::cond_ii(1.5, geometry::DiagonalB({0.4, -0.2}), 0.0);
    CHECK(eval(off, p.x, p.y) == doctest::Approx(eval(PhaseSpec::radial(1.5, 2), p.x, p.y)).epsilon(1e-14));
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(PhaseSpec::radial(0.0, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(PhaseSpec::radial(-1.0, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(PhaseSpec::cond_i(1.0, 1, 2.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(PhaseSpec::curve(1.0, 1).validate(), InvalidArgument);
  CHECK_NOTHROW(PhaseSpec::cond_ii(1.0, geometry::DiagonalB({0.0}), 1.0).validate());
  try {
    PhaseSpec::radial(-1.0, 1).validate();
  } catch (const InvalidArgument& e) {
    const std::string m = e.what();
    CHECK(m.find("beta > 0") != std::string::npos);
    CHECK(m.find("beta != -1") != std::string::npos);
  }
}

TEST_CASE("singular phases reject the diagonal") {
  Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(eval(PhaseSpec::radial(1.0, 1), x, x), DomainError);
  CHECK_THROWS_AS(mixed_hessian(PhaseSpec::radial(1.0, 1), x, x), DomainError);
}

TEST_CASE("analytic mixed Hessian matches central differences") {
  std::mt19937_64 rng(2);
  for (double beta : {0.5, 1.0, 2.0}) {
    for (int n : {1, 2}) {
      for (const auto& ph : families(beta, n)) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
          const auto p = random_pair(rng, 2 * n);
          worst = std::max(worst, rel(mixed_hessian(ph, p.x, p.y), fd_mixed_hessian(ph, p.x, p.y)));
        }
        INFO(family_name(ph.family), " beta=", beta, " n=", n);
        CHECK(worst < 1e-6);
      }
    }
  }
}

TEST_CASE("finite differences converge at second order") {
  std::mt19937_64 rng(9);
  const auto ph = PhaseSpec::cond_i(1.0, 1, 3.5, 1.0);
  const auto p = random_pair(rng, 2);
  const Eigen::MatrixXd exact = mixed_hessian(ph, p.x, p.y);
  const double e1 = (fd_mixed_hessian(ph, p.x, p.y, 1e-2) - exact).norm();
  const double e2 = (fd_mixed_hessian(ph, p.x, p.y, 5e-3) - exact).norm();
  CHECK(std::log2(e1 / e2) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("radial mixed Hessian eigenstructure") {
  std::mt19937_64 rng(4);
  for (double beta : {0.5, 1.0, 2.0}) {
    for (int n : {1, 2}) {
      const auto p = random_pair(rng, 2 * n);
      const Eigen::VectorXd z = p.x - p.y;
      const double r = z.norm();
      const Eigen::VectorXd u = z / r;
      const double Q = std::pow(r, -(beta + 2.0));
      const Eigen::MatrixXd H = mixed_hessian(PhaseSpec::radial(beta, n), p.x, p.y);
      CHECK((H - H.transpose()).norm() <= 1e-14 * H.norm());
      CHECK((H * u + beta * (beta + 1.0) * Q * u).norm() <= 1e-12 * H.norm());
      Eigen::VectorXd w = Eigen::VectorXd::Zero(2 * n);
      w[0] = -u[1];
      w[1] = u[0];
      w.normalize();
      CHECK((H * w - beta * Q * w).norm() <= 1e-12 * H.norm());
    }
  }
}

TEST_CASE("bilinear Hessian is the identity") {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.2), y = Eigen::VectorXd::Constant(3, -0.7);
  const auto ph = PhaseSpec::bilinear(3);
  CHECK((mixed_hessian(ph, x, y) - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK((fd_mixed_hessian(ph, x, y) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("radial determinant formula") {
  CHECK(fefferman_det(1.0, 1, 1.0) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(fefferman_det(2.0, 1, 1.0) == doctest::Approx(-12.0).epsilon(1e-15));
  for (double beta = 0.1; beta < 6.0; beta += 0.1)
    for (int n = 1; n <= 3; ++n) CHECK(fefferman_det(beta, n, 0.8) < 0.0);
  std::mt19937_64 rng(6);
  for (double beta : {0.5, 1.0, 2.0}) {
    for (int n : {1, 2}) {
      double worst = 0.0;
      for (int i = 0; i < 100; ++i) {
        const auto p = random_pair(rng, 2 * n);
        const double lu = generic_det(mixed_hessian(PhaseSpec::radial(beta, n), p.x, p.y));
        const double cf = fefferman_det(beta, n, (p.x - p.y).norm());
        worst = std::max(worst, std::abs(lu - cf) / std::abs(cf));
      }
      CHECK(worst < 1e-10);
    }
  }
}

TEST_CASE("Heisenberg determinant formula") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> bu(-2.0, 2.0), mu(0.2, 3.0);
  for (double beta : {0.5, 1.0, 2.0}) {
    for (int n : {1, 2}) {
      double worst = 0.0, worst_mu0 = 0.0;
      for (int i = 0; i < 100; ++i) {
        std::vector<double> b(static_cast<std::size_t>(n));
        for (auto& v : b) v = bu(rng);
        const geometry::DiagonalB B(b);
        const double m = mu(rng);
        const auto p = random_pair(rng, 2 * n, true);
        const double r = (p.x - p.y).norm();
        const double lu = generic_det(mixed_hessian(PhaseSpec::cond_ii(beta, B, m), p.x, p.y));
        const double cf = heisenberg_det(beta, B, r, m);
        worst = std::max(worst, std::abs(lu - cf) / std::max(std::abs(cf), 1e-12));
        if (i < 50) worst_mu0 = std::max(worst_mu0, std::abs(heisenberg_det(beta, B, r, 0.0) - fefferman_det(beta, n, r)) /
                                                        std::abs(fefferman_det(beta, n, r)));
      }
      CHECK(worst < 1e-8);
      CHECK(worst_mu0 < 1e-13);
    }
  }
  // Q -> 0: only 2J survives
  for (int n = 1; n <= 3; ++n)
    CHECK(heisenberg_det(1.0, geometry::DiagonalB::zero(n), 1e12, 1.0) == doctest::Approx(std::pow(4.0, n)).epsilon(1e-9));
  // 2Q^2 - 4 = 0 at Q = sqrt 2
  const double r = std::pow(std::sqrt(2.0), -1.0 / 3.0);
  CHECK(std::abs(heisenberg_det(1.0, geometry::DiagonalB::zero(1), r, 1.0)) < 1e-12);
}

TEST_CASE("Condition (i) perturbation scales like r^(kappa-2)") {
  for (double kappa : {2.5, 3.0, 4.0}) {
    std::vector<double> rs, norms;
    Eigen::VectorXd x(2), y(2);
    for (double r = 0.4; r > 0.01; r /= 2.0) {
      x << 0.3, -0.2;
      y << 0.3 - r * 0.6, -0.2 - r * 0.8;
      const Eigen::MatrixXd d = mixed_hessian(PhaseSpec::cond_i(1.0, 1, kappa, 1.0), x, y) -
                                mixed_hessian(PhaseSpec::cond_ii(1.0, geometry::DiagonalB::zero(1), 1.0), x, y);
      rs.push_back(std::log(r));
      norms.push_back(std::log(d.operatorNorm()));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      sx += rs[i];
      sy += norms[i];
      sxx += rs[i] * rs[i];
      sxy += rs[i] * norms[i];
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(std::abs(slope - (kappa - 2.0)) < 0.1);
  }
}
