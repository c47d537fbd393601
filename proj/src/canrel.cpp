#include "foldlab/canrel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "foldlab/errors.hpp"

namespace foldlab::canrel {

using phase::Family;
using phase::PhaseSpec;

SingularVariety singular_radius(double beta, double b1, double mu) {
  if (!(beta > 0.0)) throw InvalidArgument("singular_radius needs beta > 0");
  SingularVariety v;
  if (!(mu > 0.0)) return v;
  const double a = beta * beta * (beta + 1.0);
  const double b = 2.0 * mu * beta * beta * b1;
  const double c = -4.0 * mu * mu * (b1 * b1 + 1.0);
  // a > 0 and c < 0: exactly one positive root. Pick the cancellation-free form.
  const double disc = std::sqrt(b * b - 4.0 * a * c);
  const double q = b >= 0.0 ? (-2.0 * c) / (b + disc) : (-b + disc) / (2.0 * a);
  if (!(q > 0.0)) throw DomainError("singular_radius: quadratic lost its positive root");
  v.exists = true;
  v.q_root = q;
  v.radius = std::pow(q, -1.0 / (beta + 2.0));
  return v;
}

namespace {

double det_at(const PhaseSpec& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return phase::generic_det(phase::mixed_hessian(p, x, y));
}

Eigen::VectorXd random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(d);
  do {
    for (int i = 0; i < d; ++i) v[i] = g(rng);
  } while (v.norm() < 1e-8);
  return v.normalized();
}

Eigen::VectorXd random_in_ball(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double radius = std::pow(uni(rng), 1.0 / d);
  return radius * random_unit(rng, d);
}

double angle_to_direction(const Eigen::VectorXd& g, const Eigen::VectorXd& e) {
  const double along = g.dot(e);
  const double perp = (g - along * e).norm();
  return std::atan2(perp, std::abs(along));
}

}  // namespace

Eigen::VectorXd det_gradient(const PhaseSpec& p, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y) {
  const int d = p.dimension();
  const double r = (x - y).norm();
  if (p.singular() && !(r > 0.0)) throw DomainError("det_gradient needs x != y");
  const double h = 1e-6 * std::max(1.0, r);
  Eigen::VectorXd grad(2 * d);
  Eigen::VectorXd xp = x, yp = y;
  for (int i = 0; i < d; ++i) {
    xp[i] = x[i] + h;
    const double plus = det_at(p, xp, y);
    xp[i] = x[i] - h;
    const double minus = det_at(p, xp, y);
    xp[i] = x[i];
    grad[i] = (plus - minus) / (2.0 * h);

    yp[i] = y[i] + h;
    const double yplus = det_at(p, x, yp);
    yp[i] = y[i] - h;
    const double yminus = det_at(p, x, yp);
    yp[i] = y[i];
    grad[d + i] = (yplus - yminus) / (2.0 * h);
  }
  return grad;
}

double variety_radius(const PhaseSpec& p, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                      double guess, double r_min, double r_max) {
  auto f = [&](double r) { return det_at(p, x, Eigen::VectorXd(x - r * u)); };
  constexpr int kScan = 600;
  const double ratio = std::pow(r_max / r_min, 1.0 / kScan);
  double best_lo = 0.0, best_hi = 0.0, best_dist = std::numeric_limits<double>::infinity();
  double r_prev = r_min, f_prev = f(r_min);
  for (int i = 1; i <= kScan; ++i) {
    const double r = r_min * std::pow(ratio, i);
    const double fr = f(r);
    if ((f_prev < 0.0) != (fr < 0.0) || fr == 0.0) {
      const double dist = guess > 0.0 ? std::abs(std::log(std::sqrt(r * r_prev) / guess)) : 0.0;
      if (dist < best_dist) {
        best_dist = dist;
        best_lo = r_prev;
        best_hi = r;
      }
      if (guess <= 0.0) break;
    }
    r_prev = r;
    f_prev = fr;
  }
  if (best_hi == 0.0) return 0.0;

  double lo = best_lo, hi = best_hi, flo = f(lo);
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

FoldReport check_fold(const PhaseSpec& p, const FoldOptions& opts) {
  p.validate();
  if (opts.samples < 1) throw InvalidArgument("check_fold needs samples >= 1");
  if (!(opts.theta > 0.0 && opts.theta < 1.0)) throw InvalidArgument("check_fold needs 0 < theta < 1");

  FoldReport report;
  if (p.family == Family::BilinearTest || p.family == Family::RadialSingular) {
    return report;  // nondegenerate everywhere: empty variety
  }

  const int d = p.dimension();
  double guess = 0.0;
  if (p.family == Family::HeisenbergCondII) {
    guess = singular_radius(p.beta, p.B.values().front(), p.mu).radius;
  } else if (p.family == Family::CurvePhase) {
    try {
      guess = curve_fold_check(p.beta, p.k, p.mu).x0;
    } catch (const DomainError&) {
      return report;
    }
  }

  std::mt19937_64 rng(opts.seed);
  report.min_rank = d;
  report.max_rank = 0;
  report.min_first_order_ratio = std::numeric_limits<double>::infinity();
  for (int s = 0; s < opts.samples; ++s) {
    Eigen::VectorXd x = random_in_ball(rng, d);
    Eigen::VectorXd u = p.family == Family::CurvePhase ? Eigen::VectorXd::Ones(1) : random_unit(rng, d);
    const double r = variety_radius(p, x, u, guess);
    if (r == 0.0) continue;
    const Eigen::VectorXd y = x - r * u;
    if (report.points_tested == 0) report.radius = r;
    ++report.points_tested;

    const Eigen::MatrixXd m = phase::mixed_hessian(p, x, y);
    report.max_abs_det = std::max(report.max_abs_det, std::abs(phase::generic_det(m)));

    // (i) corank one
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv[i] > opts.rank_tol * sv[0]) ++rank;
    report.min_rank = std::min(report.min_rank, rank);
    report.max_rank = std::max(report.max_rank, rank);
    if (rank != d - 1) report.corank_ok = false;

    // (ii) first-order vanishing along the normal (u, -u)/sqrt 2
    const double h = 1e-6 * r;
    auto det_along = [&](double t) {
      const Eigen::VectorXd shift = (t / std::sqrt(2.0)) * u;
      return det_at(p, Eigen::VectorXd(x + shift), Eigen::VectorXd(y - shift));
    };
    const double slope = (det_along(h) - det_along(-h)) / (2.0 * h);
    const double scale = std::pow(p.beta, 2 * p.n) * std::pow(r, -2.0 * p.n * (p.beta + 2.0));
    const double ratio = std::abs(slope) / (p.family == Family::CurvePhase
                                                ? p.beta * std::pow(r, -(p.beta + 2.0))
                                                : scale);
    report.min_first_order_ratio = std::min(report.min_first_order_ratio, ratio);
    if (!(ratio >= opts.first_order_floor)) report.first_order_ok = false;

    Eigen::VectorXd normal(2 * d);
    normal << u, -u;
    normal /= std::sqrt(2.0);
    const Eigen::VectorXd grad = det_gradient(p, x, y);
    report.det_gradient_direction_error =
        std::max(report.det_gradient_direction_error, angle_to_direction(grad, normal));

    // (iii) kernel transverse to the variety: |u.w| >= theta for the right
    // (pi_L) and left (pi_R) null vectors.
    const Eigen::VectorXd w_right = svd.matrixV().col(d - 1);
    const Eigen::VectorXd w_left = svd.matrixU().col(d - 1);
    const double margin = std::min(std::abs(u.dot(w_right)), std::abs(u.dot(w_left)));
    report.min_margin = std::min(report.min_margin, margin);
    if (!(margin >= opts.theta)) report.transversality_ok = false;
  }

  report.exists = report.points_tested > 0;
  if (!report.exists) {
    report.min_rank = report.max_rank = d;
    report.min_first_order_ratio = 0.0;
    report.corank_ok = report.first_order_ok = report.transversality_ok = true;
  }
  return report;
}

double curve_second_derivative(double beta, int k, double mu, double x) {
  return beta * (beta + 1.0) * std::pow(x, -beta - 2.0) - mu * k * (k - 1) * std::pow(x, k - 2);
}

double curve_third_derivative(double beta, int k, double mu, double x) {
  return -beta * (beta + 1.0) * (beta + 2.0) * std::pow(x, -beta - 3.0) -
         mu * k * (k - 1) * (k - 2) * std::pow(x, k - 3);
}

CurveFold curve_fold_check(double beta, int k, double mu, double bracket_hi) {
  if (!(beta > 0.0)) throw InvalidArgument("curve_fold_check needs beta > 0");
  if (k < 2) throw InvalidArgument("curve_fold_check needs k >= 2");
  if (!(mu > 0.0)) throw DomainError("curve_fold_check needs mu > 0: Phi'' > 0 everywhere otherwise");

  double lo = 1e-6 * bracket_hi, hi = bracket_hi;
  const double f_lo = curve_second_derivative(beta, k, mu, lo);
  const double f_hi = curve_second_derivative(beta, k, mu, hi);
  if (!(f_lo > 0.0) || !(f_hi < 0.0)) {
    throw DomainError("Phi'' has no sign change in (0, " + std::to_string(bracket_hi) + "]");
  }
  for (int it = 0; it < 300 && hi - lo > 2.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (curve_second_derivative(beta, k, mu, mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  CurveFold out;
  out.x0 = 0.5 * (lo + hi);
  out.third_derivative = curve_third_derivative(beta, k, mu, out.x0);
  return out;
}

}  // namespace foldlab::canrel
