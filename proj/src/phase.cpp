#include "foldlab/phase.hpp"

#include <array>
#include <cmath>
#include <string>

#include "foldlab/errors.hpp"

namespace foldlab::phase {

namespace {

constexpr std::array<std::pair<Family, std::string_view>, 5> kFamilyNames{{
    {Family::BilinearTest, "bilinear"},
    {Family::RadialSingular, "radial"},
    {Family::HeisenbergCondI, "cond-i"},
    {Family::HeisenbergCondII, "cond-ii"},
    {Family::CurvePhase, "curve"},
}};

// |z|^-beta with the common exponents special-cased; pow dominates kernel cost.
inline double inv_pow(double r, double beta) {
  if (beta == 1.0) return 1.0 / r;
  if (beta == 2.0) return 1.0 / (r * r);
  if (beta == 0.5) return 1.0 / std::sqrt(r);
  return std::pow(r, -beta);
}

inline double norm_diff(const double* x, const double* y, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    const double z = x[i] - y[i];
    s += z * z;
  }
  return std::sqrt(s);
}

void require_off_diagonal(double r) {
  if (!(r > 0.0)) throw DomainError("phase is singular on the diagonal x = y");
}

}  // namespace

std::string_view family_name(Family f) noexcept {
  for (const auto& [fam, name] : kFamilyNames)
    if (fam == f) return name;
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (const auto& [fam, n] : kFamilyNames)
    if (n == name) return fam;
  throw InvalidArgument("unknown phase family '" + std::string(name) + "'");
}

PhaseSpec PhaseSpec::bilinear(int dim) {
  PhaseSpec p;
  p.family = Family::BilinearTest;
  p.dim = dim;
  p.n = 1;
  return p;
}

PhaseSpec PhaseSpec::radial(double beta, int n) {
  PhaseSpec p;
  p.family = Family::RadialSingular;
  p.beta = beta;
  p.n = n;
  return p;
}

PhaseSpec PhaseSpec::cond_i(double beta, int n, double kappa, double mu) {
  PhaseSpec p;
  p.family = Family::HeisenbergCondI;
  p.beta = beta;
  p.n = n;
  p.kappa = kappa;
  p.mu = mu;
  return p;
}

PhaseSpec PhaseSpec::cond_ii(double beta, geometry::DiagonalB B, double mu, double cubic) {
  PhaseSpec p;
  p.family = Family::HeisenbergCondII;
  p.beta = beta;
  p.n = B.n();
  p.B = std::move(B);
  p.mu = mu;
  p.cubic = cubic;
  return p;
}

PhaseSpec PhaseSpec::curve(double beta, int k, double mu) {
  PhaseSpec p;
  p.family = Family::CurvePhase;
  p.beta = beta;
  p.k = k;
  p.mu = mu;
  return p;
}

int PhaseSpec::dimension() const noexcept {
  switch (family) {
    case Family::BilinearTest:
      return dim > 0 ? dim : 2 * n;
    case Family::CurvePhase:
      return 1;
    default:
      return 2 * n;
  }
}

void PhaseSpec::validate() const {
  if (family == Family::BilinearTest) {
    if (dimension() <= 0) throw InvalidArgument("bilinear phase needs dim > 0");
    return;
  }
  if (!(beta > 0.0)) {
    throw InvalidArgument("beta must satisfy beta > 0 (and beta != -1 for the radial determinant), got " +
                          std::to_string(beta));
  }
  if (family != Family::CurvePhase && n <= 0) throw InvalidArgument("n must be positive");
  if (!(mu >= 0.0)) throw InvalidArgument("mu must be >= 0");
  switch (family) {
    case Family::HeisenbergCondI:
      if (!(kappa > 2.0)) throw InvalidArgument("kappa must satisfy kappa > 2");
      break;
    case Family::HeisenbergCondII:
      if (B.n() != n) throw InvalidArgument("B must carry n entries");
      break;
    case Family::CurvePhase:
      if (k < 2) throw InvalidArgument("curve exponent k must satisfy k >= 2");
      break;
    default:
      break;
  }
}

double eval(const PhaseSpec& p, const double* x, const double* y) {
  const int d = p.dimension();
  if (p.family == Family::BilinearTest) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += x[i] * y[i];
    return s;
  }
  if (p.family == Family::CurvePhase) {
    const double z = x[0] - y[0];
    const double r = std::abs(z);
    require_off_diagonal(r);
    return inv_pow(r, p.beta) - p.mu * std::pow(z, p.k);
  }

  const double r = norm_diff(x, y, d);
  require_off_diagonal(r);
  const double radial = inv_pow(r, p.beta);
  if (p.family == Family::RadialSingular) return radial;

  double coupled = 2.0 * geometry::symplectic_form(x, y, p.n);
  if (p.family == Family::HeisenbergCondI) {
    coupled -= p.kappa_coeff * std::pow(r, p.kappa);
  } else {
    double q = 0.0;
    for (int i = 0; i < d; ++i) {
      const double z = x[i] - y[i];
      q += p.B.diag(i) * z * z;
    }
    coupled -= q + p.cubic * r * r * r;
  }
  return radial + p.mu * coupled;
}

double eval(const PhaseSpec& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const int d = p.dimension();
  if (x.size() != d || y.size() != d) throw InvalidArgument("phase evaluated at points of wrong dimension");
  return eval(p, x.data(), y.data());
}

void gradient(const PhaseSpec& p, const double* x, const double* y, double* gx, double* gy) {
  const int d = p.dimension();
  if (p.family == Family::BilinearTest) {
    for (int i = 0; i < d; ++i) {
      gx[i] = y[i];
      gy[i] = x[i];
    }
    return;
  }
  if (p.family == Family::CurvePhase) {
    const double z = x[0] - y[0];
    const double r = std::abs(z);
    require_off_diagonal(r);
    const double dz = -p.beta * inv_pow(r, p.beta + 2.0) * z - p.mu * p.k * std::pow(z, p.k - 1);
    gx[0] = dz;
    gy[0] = -dz;
    return;
  }

  const double r = norm_diff(x, y, d);
  require_off_diagonal(r);
  // Radial-type terms are functions of z = x - y: d/dx = d/dz, d/dy = -d/dz.
  double radial_coeff = -p.beta * inv_pow(r, p.beta + 2.0);
  if (p.family == Family::HeisenbergCondI) {
    radial_coeff -= p.mu * p.kappa_coeff * p.kappa * std::pow(r, p.kappa - 2.0);
  } else if (p.family == Family::HeisenbergCondII) {
    radial_coeff -= p.mu * 3.0 * p.cubic * r;
  }
  for (int i = 0; i < d; ++i) {
    double dz = radial_coeff * (x[i] - y[i]);
    if (p.family == Family::HeisenbergCondII) dz -= p.mu * 2.0 * p.B.diag(i) * (x[i] - y[i]);
    gx[i] = dz;
    gy[i] = -dz;
  }
  if (p.family == Family::RadialSingular) return;

  const int n = p.n;
  for (int i = 0; i < n; ++i) {
    gx[i] += 2.0 * p.mu * y[i + n];
    gx[i + n] -= 2.0 * p.mu * y[i];
    gy[i] -= 2.0 * p.mu * x[i + n];
    gy[i + n] += 2.0 * p.mu * x[i];
  }
}

Eigen::MatrixXd mixed_hessian(const PhaseSpec& p, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y) {
  const int d = p.dimension();
  if (x.size() != d || y.size() != d) throw InvalidArgument("mixed_hessian at points of wrong dimension");
  if (p.family == Family::BilinearTest) return Eigen::MatrixXd::Identity(d, d);

  const Eigen::VectorXd z = x - y;
  const double r = z.norm();
  require_off_diagonal(r);

  if (p.family == Family::CurvePhase) {
    const double second = p.beta * (p.beta + 1.0) * inv_pow(r, p.beta + 2.0) -
                          p.mu * p.k * (p.k - 1) * std::pow(z[0], p.k - 2);
    return Eigen::MatrixXd::Constant(1, 1, -second);
  }

  const Eigen::VectorXd u = z / r;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd uut = u * u.transpose();
  Eigen::MatrixXd h = p.beta * inv_pow(r, p.beta + 2.0) * (I - (p.beta + 2.0) * uut);
  if (p.family == Family::RadialSingular) return h;

  h += p.mu * 2.0 * geometry::SymplecticJ(p.n).dense();
  if (p.family == Family::HeisenbergCondI) {
    h += p.mu * p.kappa_coeff * p.kappa * std::pow(r, p.kappa - 2.0) * (I + (p.kappa - 2.0) * uut);
  } else {
    h += p.mu * (2.0 * p.B.dense() + 3.0 * p.cubic * r * (I + uut));
  }
  return h;
}

Eigen::MatrixXd fd_mixed_hessian(const PhaseSpec& p, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, double step) {
  const int d = p.dimension();
  if (x.size() != d || y.size() != d) throw InvalidArgument("fd_mixed_hessian at points of wrong dimension");
  if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  const double r = (x - y).norm();
  const double h = step * std::max(1.0, r);
  if (p.singular() && h > r / 10.0) {
    throw InvalidArgument("finite-difference step " + std::to_string(h) +
                          " exceeds |x-y|/10 = " + std::to_string(r / 10.0));
  }

  Eigen::MatrixXd out(d, d);
  Eigen::VectorXd xp = x, yp = y;
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
      auto at = [&](double sx, double sy) {
        xp[k] = x[k] + sx * h;
        yp[l] = y[l] + sy * h;
        const double v = eval(p, xp, yp);
        xp[k] = x[k];
        yp[l] = y[l];
        return v;
      };
      out(k, l) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
    }
  }
  return out;
}

double fefferman_det(double beta, int n, double r) {
  if (!(r > 0.0)) throw DomainError("fefferman_det needs r > 0");
  if (beta == 0.0 || beta == -1.0) throw DomainError("fefferman_det needs beta not in {0, -1}");
  if (n <= 0) throw InvalidArgument("n must be positive");
  return -(beta + 1.0) * std::pow(beta, 2 * n) * std::pow(r, -2.0 * n * (beta + 2.0));
}

double heisenberg_det(double beta, const geometry::DiagonalB& B, double r, double mu) {
  if (!(r > 0.0)) throw DomainError("heisenberg_det needs r > 0");
  const double q = std::pow(r, -(beta + 2.0));
  const double b1 = B.values().front();
  const double b2 = beta * beta;
  double det = -(b2 * (beta + 1.0) * q * q + 2.0 * mu * b2 * b1 * q - 4.0 * mu * mu * b1 * b1 -
                 4.0 * mu * mu);
  for (int i = 1; i < B.n(); ++i) {
    const double t = beta * q + 2.0 * mu * B.values()[static_cast<std::size_t>(i)];
    det *= t * t + 4.0 * mu * mu;
  }
  return det;
}

double generic_det(const Eigen::MatrixXd& m) { return m.partialPivLu().determinant(); }

}  // namespace foldlab::phase
