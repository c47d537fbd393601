#pragma once

// Fold-singularity analysis of the canonical relation generated by a phase:
// where det(Phi_xy) vanishes, whether it vanishes to first order, and whether
// the kernel of Phi_xy is transverse to the singular variety.

#include <Eigen/Dense>
#include <cstdint>

#include "foldlab/phase.hpp"

namespace foldlab::canrel {

struct SingularVariety {
  bool exists = false;
  double radius = 0.0;  // r* with det = 0 on |x-y| = r*
  double q_root = 0.0;  // r*^-(beta+2)
};

/// Positive root Q of beta^2(beta+1)Q^2 + 2 mu beta^2 b1 Q - 4 mu^2 (b1^2 + 1) = 0.
/// For beta > 0 and mu > 0 the root always exists and is unique.
SingularVariety singular_radius(double beta, double b1, double mu = 1.0);

/// Gradient of (x, y) -> det(mixed_hessian(x, y)) by central differences,
/// returned as (d/dx, d/dy), length 2d.
Eigen::VectorXd det_gradient(const phase::PhaseSpec& p, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y);

/// Radius r > 0 with det(Phi_xy(x, x - r u)) = 0, searched in [r_min, r_max]
/// and preferring the sign change closest to `guess` (0 = none). Returns 0
/// when there is no sign change.
double variety_radius(const phase::PhaseSpec& p, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u, double guess = 0.0, double r_min = 0.05,
                      double r_max = 20.0);

struct FoldOptions {
  int samples = 50;
  double theta = 0.1;              // transversality floor on |u.w|
  double first_order_floor = 1e-3; // |d det/ds| relative to beta^{2n} r^{-2n(beta+2)}
  double rank_tol = 1e-8;          // singular values below rank_tol * sigma_max are zero
  std::uint64_t seed = 1;
};

struct FoldReport {
  bool exists = false;
  int points_tested = 0;
  double radius = 0.0;  // variety radius at the first sampled point
  bool corank_ok = true;
  bool first_order_ok = true;
  bool transversality_ok = true;
  int min_rank = 0;
  int max_rank = 0;
  double min_margin = 1.0;                    // min |u.w| over unit kernel vectors
  double min_first_order_ratio = 0.0;         // min |d det/ds| / local scale
  double det_gradient_direction_error = 0.0;  // max angle (rad) to +-(u, -u)
  double max_abs_det = 0.0;                   // |det| at the located points

  bool passed() const noexcept { return corank_ok && first_order_ok && transversality_ok; }
};

FoldReport check_fold(const phase::PhaseSpec& p, const FoldOptions& opts = {});

struct CurveFold {
  double x0 = 0.0;
  double third_derivative = 0.0;
};

double curve_second_derivative(double beta, int k, double mu, double x);
double curve_third_derivative(double beta, int k, double mu, double x);

/// Root of Phi''(x) = beta(beta+1)x^{-beta-2} - mu k(k-1) x^{k-2} in (0, bracket_hi]
/// by bisection, plus Phi'''(x0). Throws DomainError without a sign change.
CurveFold curve_fold_check(double beta, int k, double mu, double bracket_hi = 100.0);

}  // namespace foldlab::canrel
