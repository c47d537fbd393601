#pragma once

// Phase function catalog with analytic derivatives and the closed-form
// determinants of their mixed Hessians.

#include <Eigen/Dense>
#include <string>
#include <string_view>

#include "foldlab/geometry.hpp"

namespace foldlab::phase {

enum class Family {
  BilinearTest,      // x.y in any dimension
  RadialSingular,    // |x-y|^-beta
  HeisenbergCondI,   // |x-y|^-beta + mu (2 x^t J y - c |x-y|^kappa)
  HeisenbergCondII,  // |x-y|^-beta + mu (2 x^t J y - (x-y)^t B (x-y) - rho |x-y|^3)
  CurvePhase,        // |x-y|^-beta - mu (x-y)^k, one variable
};

std::string_view family_name(Family f) noexcept;
Family parse_family(std::string_view name);

struct PhaseSpec {
  Family family = Family::RadialSingular;
  double beta = 1.0;
  int n = 1;
  int dim = 0;               // BilinearTest only; 0 means 2n
  double kappa = 3.0;        // CondI exponent, > 2
  double kappa_coeff = 1.0;  // CondI coefficient c of |x-y|^kappa
  geometry::DiagonalB B;     // CondII
  double cubic = 0.0;        // CondII Taylor remainder coefficient rho
  double mu = 1.0;           // coupling of the twist / curve term
  int k = 2;                 // CurvePhase exponent

  static PhaseSpec bilinear(int dim);
  static PhaseSpec radial(double beta, int n);
  static PhaseSpec cond_i(double beta, int n, double kappa, double mu = 1.0);
  static PhaseSpec cond_ii(double beta, geometry::DiagonalB B, double mu = 1.0,
                           double cubic = 0.0);
  static PhaseSpec curve(double beta, int k, double mu = 1.0);

  int dimension() const noexcept;
  /// True for families containing |x-y|^-beta, which blow up on the diagonal.
  bool singular() const noexcept { return family != Family::BilinearTest; }
  /// Throws InvalidArgument naming the first violated parameter constraint.
  void validate() const;
};

/// Phase value. Raw pointers point at dimension() doubles each.
double eval(const PhaseSpec& p, const double* x, const double* y);
double eval(const PhaseSpec& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Analytic gradients with respect to x and y (each dimension() long).
void gradient(const PhaseSpec& p, const double* x, const double* y, double* gx, double* gy);

/// d x d matrix of d^2 Phi / dx_k dy_l.
Eigen::MatrixXd mixed_hessian(const PhaseSpec& p, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y);

/// Central-difference oracle for mixed_hessian. `step` is relative to
/// max(1, |x-y|) and must not exceed |x-y|/10.
inline constexpr double kDefaultFdStep = 1e-4;
Eigen::MatrixXd fd_mixed_hessian(const PhaseSpec& p, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, double step = kDefaultFdStep);

/// det of the radial mixed Hessian: -(beta+1) beta^{2n} r^{-2n(beta+2)}.
double fefferman_det(double beta, int n, double r);

/// Closed-form det(beta Q (I - (beta+2) u u^t) + mu (2J + 2B)), Q = r^-(beta+2),
/// with u in the (e_1, e_{n+1}) plane (any u when B is uniform):
///   -(b^2(b+1)Q^2 + 2 mu b^2 b1 Q - 4 mu^2 b1^2 - 4 mu^2) prod_{i>=2} ((bQ + 2 mu b_i)^2 + 4 mu^2)
double heisenberg_det(double beta, const geometry::DiagonalB& B, double r, double mu = 1.0);

/// Generic LU determinant, used as the independent route for the formulas above.
double generic_det(const Eigen::MatrixXd& m);

}  // namespace foldlab::phase
