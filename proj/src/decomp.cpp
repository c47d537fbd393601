#include "foldlab/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "foldlab/bump.hpp"
#include "foldlab/errors.hpp"

namespace foldlab::decomp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Plateau/ramp pair for a periodic or interval partition with spacing `gap`:
// 1 on |t - a| <= gap - 2 delta, 0 beyond 2 delta, and neighbours summing to 1.
double patch_value(double dist, double plateau, double ramp) {
  return 1.0 - smooth_step((dist - plateau) / ramp);
}

double wrap_angle(double a) {
  a = std::remainder(a, kTwoPi);
  return a;
}

double norm2n(const double* v, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------- cutoffs

CutoffFamily::CutoffFamily(double delta) : delta_(delta) {
  if (!(delta > 0.0) || !(delta <= 0.125))
    throw InvalidArgument("cutoff delta must satisfy 0 < delta <= 1/8, got " + std::to_string(delta));
  const int m = static_cast<int>(std::floor(0.25 / delta));
  spacing_ = 0.75 / m;
  plateau_ = spacing_ - 2.0 * delta;
  ramp_ = 4.0 * delta - spacing_;
  if (!(ramp_ > 0.0))
    throw InvalidArgument("delta " + std::to_string(delta) + " leaves no room for the radial patches");
  patches_ = m + 1;

  cones_ = static_cast<int>(std::floor(kTwoPi / (3.0 * delta)));
  cone_spacing_ = kTwoPi / cones_;
  cone_plateau_ = cone_spacing_ - 2.0 * delta;
  cone_ramp_ = 4.0 * delta - cone_spacing_;
  if (!(cone_ramp_ > 0.0))
    throw InvalidArgument("delta " + std::to_string(delta) + " leaves no room for the angular cones");
}

CutoffFamily build_cutoffs(double delta) { return CutoffFamily(delta); }

double CutoffFamily::zeta(double t) const { return foldlab::zeta(t); }

double CutoffFamily::theta(double t) const { return foldlab::zeta(t) - foldlab::zeta(2.0 * t); }

double CutoffFamily::center(int h) const {
  if (h < 0 || h >= patches_) throw InvalidArgument("patch index out of range");
  return 0.25 + spacing_ * h;
}

double CutoffFamily::chi(int h, double t) const {
  return patch_value(std::abs(t - center(h)), plateau_, ramp_);
}

double CutoffFamily::cone_center(int c) const {
  if (c < 0 || c >= cones_) throw InvalidArgument("cone index out of range");
  return cone_spacing_ * c;
}

double CutoffFamily::chi_cone(int c, double angle) const {
  return patch_value(std::abs(wrap_angle(angle - cone_center(c))), cone_plateau_, cone_ramp_);
}

double CutoffFamily::chi_cone(int c, const double* z, int n) const {
  if (z[0] == 0.0 && z[n] == 0.0) return 1.0 / cones_;
  return chi_cone(c, std::atan2(z[n], z[0]));
}

double PartitionCheck::max() const noexcept {
  return std::max({dyadic, patches, resummation, cones});
}

double dyadic_sum(const CutoffFamily& fam, double t, int lo, int hi) {
  double s = 0.0;
  for (int j = lo; j <= hi; ++j) s += fam.theta(std::ldexp(t, j));
  return s;
}

PartitionCheck check_partitions(const CutoffFamily& fam, int samples) {
  if (samples < 2) throw InvalidArgument("check_partitions needs >= 2 samples");
  PartitionCheck out;
  const double step = 1.0 / (samples - 1);
  for (int i = 0; i < samples; ++i) {
    const double u = step * i;
    // (0, 1/2]: half the samples uniform, half log-spaced down to 1e-9
    const double tl = 0.5 * std::pow(1e-9, 1.0 - u);
    const double tu = std::max(0.5 * u, 1e-9);
    for (double t : {tl, tu}) out.dyadic = std::max(out.dyadic, std::abs(dyadic_sum(fam, t, 0, 40) - 1.0));

    const double tp = 0.25 + 0.75 * u;
    double sum = 0.0;
    for (int h = 0; h < fam.patches(); ++h) sum += fam.chi(h, tp);
    out.patches = std::max(out.patches, std::abs(sum - 1.0));

    const double tr = 1.5 * u;
    double resum = 0.0;
    for (int h = 0; h < fam.patches(); ++h) resum += fam.chi(h, tr) * fam.theta(tr);
    out.resummation = std::max(out.resummation, std::abs(resum - fam.theta(tr)));

    const double ang = -std::numbers::pi + kTwoPi * u;
    double cs = 0.0;
    for (int c = 0; c < fam.cones(); ++c) cs += fam.chi_cone(c, ang);
    out.cones = std::max(out.cones, std::abs(cs - 1.0));
  }
  return out;
}

// ---------------------------------------------------------------- phase conditions

void PhaseCondition::validate() const {
  if (!(beta > 0.0)) throw InvalidArgument("beta must satisfy beta > 0");
  if (n < 1) throw InvalidArgument("n must be positive");
  if (cond == Condition::I) {
    if (!(kappa > 2.0)) throw InvalidArgument("condition (i) needs kappa > 2");
    if (!std::isfinite(kappa_coeff)) throw InvalidArgument("kappa coefficient must be finite");
  } else {
    if (!b.empty() && static_cast<int>(b.size()) != n)
      throw InvalidArgument("condition (ii) needs n entries in b");
    if (!std::isfinite(cubic)) throw InvalidArgument("cubic coefficient must be finite");
  }
}

bool PhaseCondition::radial() const {
  if (cond == Condition::I || b.empty()) return true;
  return std::all_of(b.begin(), b.end(), [&](double v) { return v == b.front(); });
}

double PhaseCondition::phi(double r) const {
  if (cond == Condition::I) return kappa_coeff * std::pow(r, kappa);
  if (!radial()) throw InvalidArgument("phi(r) needs a radial phase");
  const double b1 = b.empty() ? 0.0 : b.front();
  return b1 * r * r + cubic * r * r * r;
}

double PhaseCondition::phi_rescaled(int j, double r) const {
  if (cond == Condition::I) return kappa_coeff * std::pow(2.0, -j * (kappa - 2.0)) * std::pow(r, kappa);
  if (!radial()) throw InvalidArgument("phi(r) needs a radial phase");
  const double b1 = b.empty() ? 0.0 : b.front();
  return b1 * r * r + std::ldexp(cubic, -j) * r * r * r;
}

phase::PhaseSpec PhaseCondition::dyadic_phase(int j, double s) const {
  validate();
  if (cond == Condition::I) {
    phase::PhaseSpec p = phase::PhaseSpec::cond_i(beta, n, kappa, s);
    p.kappa_coeff = kappa_coeff * std::pow(2.0, -j * (kappa - 2.0));
    return p;
  }
  const geometry::DiagonalB B = b.empty() ? geometry::DiagonalB::zero(n) : geometry::DiagonalB(b);
  return phase::PhaseSpec::cond_ii(beta, B, s, std::ldexp(cubic, -j));
}

Eigen::MatrixXd phi_mixed_hessian(const PhaseCondition& c, int j, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y) {
  const phase::PhaseSpec full = c.dyadic_phase(j, 1.0);
  const phase::PhaseSpec bare = phase::PhaseSpec::cond_ii(c.beta, geometry::DiagonalB::zero(c.n), 1.0, 0.0);
  return phase::mixed_hessian(full, x, y) - phase::mixed_hessian(bare, x, y);
}

double coupling(int j, double beta, double tau) { return tau * std::pow(2.0, -j * (beta + 2.0)); }
double tau_for(int j, double beta, double s) { return s * std::pow(2.0, j * (beta + 2.0)); }

// ---------------------------------------------------------------- amplitudes

void AmplitudeSpec::validate(const CutoffFamily& fam) const {
  if (!(alpha >= 0.0)) throw InvalidArgument("alpha must satisfy alpha >= 0");
  if (!(beta > 0.0)) throw InvalidArgument("beta must satisfy beta > 0");
  if (n < 1) throw InvalidArgument("n must be positive");
  if (j < 1) throw InvalidArgument("dyadic index j must be >= 1");
  if (h < -1 || h >= fam.patches()) throw InvalidArgument("patch index h out of range");
  if (cone < -1 || cone >= fam.cones()) throw InvalidArgument("cone index out of range");
  if (!(localizer_radius > 0.0)) throw InvalidArgument("localizer radius must be positive");
}

double radial_profile(const AmplitudeSpec& a, const CutoffFamily& fam, double r) {
  const double th = fam.theta(r);
  if (th == 0.0) return 0.0;
  const double patch = a.h < 0 ? 1.0 : fam.chi(a.h, r);
  if (patch == 0.0) return 0.0;
  return patch * th * std::pow(r, -2.0 * a.n - a.alpha);
}

double rescaled_amplitude(const AmplitudeSpec& a, const CutoffFamily& fam, const double* x,
                          const double* y) {
  const int d = 2 * a.n;
  double z[64];
  if (d > 64) throw InvalidArgument("dimension too large");
  for (int i = 0; i < d; ++i) z[i] = x[i] - y[i];
  const double r = norm2n(z, d);
  double v = radial_profile(a, fam, r);
  if (v == 0.0) return 0.0;
  if (a.cone >= 0) v *= fam.chi_cone(a.cone, z, a.n);
  const double scale = std::ldexp(1.0, -a.j) / a.localizer_radius;
  return v * foldlab::zeta(scale * norm2n(x, d)) * foldlab::zeta(scale * norm2n(y, d));
}

std::vector<double> sampled_seminorms(const AmplitudeSpec& a, const CutoffFamily& fam, int order,
                                      int samples, double window, std::uint64_t seed) {
  a.validate(fam);
  if (order < 0 || order > 6) throw InvalidArgument("seminorm order must lie in [0, 6]");
  const int d = 2 * a.n;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-window, window);
  std::uniform_real_distribution<double> rad(0.3, 0.95);
  std::normal_distribution<double> gauss;
  std::vector<double> out(static_cast<std::size_t>(order) + 1, 0.0);
  const double h = 1e-2;
  std::vector<double> x(d), y(d), v(2 * d), px(d), py(d);
  for (int sidx = 0; sidx < samples; ++sidx) {
    for (int i = 0; i < d; ++i) x[i] = box(rng);
    double zn = 0.0;
    std::vector<double> z(d);
    for (int i = 0; i < d; ++i) {
      z[i] = gauss(rng);
      zn += z[i] * z[i];
    }
    const double r = rad(rng);
    for (int i = 0; i < d; ++i) y[i] = x[i] - r * z[i] / std::sqrt(zn);
    double vn = 0.0;
    for (auto& c : v) {
      c = gauss(rng);
      vn += c * c;
    }
    for (auto& c : v) c /= std::sqrt(vn);
    auto g = [&](double t) {
      for (int i = 0; i < d; ++i) {
        px[i] = x[i] + t * v[i];
        py[i] = y[i] + t * v[d + i];
      }
      return rescaled_amplitude(a, fam, px.data(), py.data());
    };
    for (int k = 0; k <= order; ++k) {
      // central k-th difference on the grid t = (k/2 - i) h
      double acc = 0.0, binom = 1.0;
      for (int i = 0; i <= k; ++i) {
        acc += (i % 2 ? -binom : binom) * g((0.5 * k - i) * h);
        binom = binom * (k - i) / (i + 1);
      }
      out[static_cast<std::size_t>(k)] =
          std::max(out[static_cast<std::size_t>(k)], std::abs(acc) / std::pow(h, k));
    }
  }
  return out;
}

// ---------------------------------------------------------------- grid pieces

namespace {

DyadicOperator make_dyadic(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                           const CutoffFamily& fam, double half_width,
                           const std::function<opnorm::OscOperator(const phase::PhaseSpec&,
                                                                   const opnorm::Amplitude&, double,
                                                                   opnorm::OperatorOptions)>& build,
                           opnorm::Resolution mode) {
  a.validate(fam);
  c.validate();
  if (a.n != c.n || a.beta != c.beta) throw InvalidArgument("amplitude and phase disagree on n or beta");
  if (!(tau >= 0.0)) throw InvalidArgument("tau must be >= 0");
  if (!(half_width > 0.0)) throw InvalidArgument("window half width must be positive");
  const int d = 2 * a.n;
  const double s = coupling(a.j, a.beta, tau);
  const double lambda = std::pow(2.0, a.j * a.beta);
  phase::PhaseSpec ph = c.dyadic_phase(a.j, s);
  const opnorm::Box xb = opnorm::Box::cube(d, -half_width, half_width);
  const opnorm::Box yb = opnorm::Box::cube(d, -half_width - 1.0, half_width + 1.0);
  opnorm::Amplitude amp(
      xb, yb, [a, fam](const double* x, const double* y) { return rescaled_amplitude(a, fam, x, y); },
      [d, half_width](const double* x) {
        double v = 1.0;
        for (int i = 0; i < d; ++i) v *= interval_bump(x[i], -half_width, half_width);
        return v;
      });
  opnorm::OperatorOptions opts;
  opts.resolution = mode;
  opts.min_separation = 0.25;
  opts.prefactor = std::pow(2.0, a.j * a.alpha);
  opnorm::OscOperator op = build(ph, amp, lambda, opts);
  return DyadicOperator{a.j, tau, s, lambda, std::move(ph), std::move(op)};
}

}  // namespace

DyadicOperator build_Tj_tau(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                            const CutoffFamily& fam, double half_width, const opnorm::GridRule& rule,
                            opnorm::Resolution mode) {
  return make_dyadic(
      a, c, tau, fam, half_width,
      [&](const phase::PhaseSpec& p, const opnorm::Amplitude& amp, double lambda, opnorm::OperatorOptions o) {
        return opnorm::build_operator(p, amp, lambda, rule, std::move(o));
      },
      mode);
}

DyadicOperator build_Tj_tau(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                            const CutoffFamily& fam, double half_width, int points_per_axis,
                            opnorm::Resolution mode) {
  if (points_per_axis < 1) throw InvalidArgument("points per axis must be positive");
  return make_dyadic(
      a, c, tau, fam, half_width,
      [&](const phase::PhaseSpec& p, const opnorm::Amplitude& amp, double lambda, opnorm::OperatorOptions o) {
        opnorm::GridSpec g;
        g.points = {points_per_axis};
        return opnorm::build_operator(p, amp, lambda, g, std::move(o));
      },
      mode);
}

// ---------------------------------------------------------------- spectral pieces

namespace {

void check_radial(const AmplitudeSpec& a, const PhaseCondition& c, const CutoffFamily& fam, double tau) {
  a.validate(fam);
  c.validate();
  if (a.n != c.n || a.beta != c.beta) throw InvalidArgument("amplitude and phase disagree on n or beta");
  if (a.cone >= 0) throw InvalidArgument("spectral pieces need the cone-summed amplitude (cone = -1)");
  if (!c.radial()) throw InvalidArgument("spectral pieces need a radial phi (uniform b)");
  if (!(tau >= 0.0)) throw InvalidArgument("tau must be >= 0");
}

std::pair<double, double> profile_support(const AmplitudeSpec& a, const CutoffFamily& fam) {
  double lo = 0.25, hi = 1.0;
  if (a.h >= 0) {
    lo = std::max(lo, fam.center(a.h) - 2.0 * fam.delta());
    hi = std::min(hi, fam.center(a.h) + 2.0 * fam.delta());
  }
  return {lo, hi};
}

}  // namespace

TwistedPiece rescaled_piece(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                            const CutoffFamily& fam) {
  check_radial(a, c, fam, tau);
  const double s = coupling(a.j, a.beta, tau);
  const double lambda = std::pow(2.0, a.j * a.beta);
  const auto [lo, hi] = profile_support(a, fam);
  TwistedPiece p;
  const int j = a.j;
  const double beta = a.beta;
  p.kernel.amplitude = [a, fam](double r) { return radial_profile(a, fam, r); };
  p.kernel.phase = [c, j, beta, s](double r) { return std::pow(r, -beta) - s * c.phi_rescaled(j, r); };
  p.kernel.lambda = lambda;
  p.kernel.r_lo = lo;
  p.kernel.r_hi = hi;
  p.kernel.n = a.n;
  p.kernel.prefactor = std::pow(2.0, a.j * a.alpha);
  p.sigma = 2.0 * lambda * s;
  return p;
}

TwistedPiece unrescaled_piece(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                              const CutoffFamily& fam) {
  check_radial(a, c, fam, tau);
  const auto [lo, hi] = profile_support(a, fam);
  const double scale = std::ldexp(1.0, a.j);
  const double boost = std::pow(scale, 2.0 * a.n + a.alpha);
  const double beta = a.beta;
  TwistedPiece p;
  p.kernel.amplitude = [a, fam, scale, boost](double r) { return boost * radial_profile(a, fam, scale * r); };
  p.kernel.phase = [c, beta, tau](double r) { return std::pow(r, -beta) - tau * c.phi(r); };
  p.kernel.lambda = 1.0;
  p.kernel.r_lo = lo / scale;
  p.kernel.r_hi = hi / scale;
  p.kernel.n = a.n;
  p.sigma = 2.0 * tau;
  return p;
}

double piece_norm(const TwistedPiece& p, const opnorm::SpectralOptions& o) {
  return opnorm::twisted_radial_norm(p.kernel, p.sigma, o).norm;
}

std::vector<double> band_samples(double epsilon, int interior) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw InvalidArgument("band epsilon must lie in (0, 1)");
  if (interior < 1) throw InvalidArgument("need at least one interior band sample");
  std::vector<double> out;
  for (int i = 0; i <= interior + 1; ++i)
    out.push_back(std::pow(epsilon, 1.0 - 2.0 * i / (interior + 1)));
  return out;
}

// ---------------------------------------------------------------- sweeps

KeyEstimateResult key_estimate_sweep(const AmplitudeSpec& a, const PhaseCondition& c,
                                     const CutoffFamily& fam, const KeyEstimateOptions& o) {
  if (o.js.size() < 3) throw InvalidArgument("key estimate sweep needs >= 3 values of j");
  for (std::size_t i = 1; i < o.js.size(); ++i)
    if (o.js[i] <= o.js[i - 1]) throw InvalidArgument("j values must increase");
  const std::vector<double> band = band_samples(o.epsilon, o.interior);
  KeyEstimateResult res;
  std::vector<double> xs;
  for (int j : o.js) {
    AmplitudeSpec aj = a;
    aj.j = j;
    double best = 0.0, best_s = 0.0;
    const int hlo = o.patch_sup ? 0 : -1;
    const int hhi = o.patch_sup ? fam.patches() - 1 : -1;
    for (int h = hlo; h <= hhi; ++h) {
      aj.h = h;
      for (double s : band) {
        const double tau = tau_for(j, a.beta, s);
        const double v = piece_norm(rescaled_piece(aj, c, tau, fam), o.spectral);
        res.rows.push_back({j, h, s, tau, v});
        if (v > best) {
          best = v;
          best_s = s;
        }
      }
    }
    res.js.push_back(j);
    res.sup.push_back(best);
    res.argmax_s.push_back(best_s);
    xs.push_back(std::ldexp(1.0, j));
  }
  const opnorm::SlopeFit f = opnorm::fit_slope(xs, res.sup);
  res.slope = f.slope;
  res.slope_stderr = f.stderr_;
  return res;
}

RegimeResult regime_check(const AmplitudeSpec& a, const PhaseCondition& c, const CutoffFamily& fam,
                          const std::vector<double>& couplings, double epsilon,
                          const opnorm::SpectralOptions& o) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw InvalidArgument("band epsilon must lie in (0, 1)");
  if (couplings.empty()) throw InvalidArgument("regime check needs at least one coupling");
  for (double s : couplings) {
    if (!(s >= 0.0)) throw InvalidArgument("couplings must be >= 0");
    if (s > epsilon && s < 1.0 / epsilon)
      throw InvalidArgument("coupling " + std::to_string(s) + " lies inside the critical band (" +
                            std::to_string(epsilon) + ", " + std::to_string(1.0 / epsilon) + ")");
  }
  RegimeResult res;
  res.j = a.j;
  const double n = a.n;
  for (double s : couplings) {
    RegimeRow row;
    row.s = s;
    row.tau = tau_for(a.j, a.beta, s);
    row.norm = piece_norm(rescaled_piece(a, c, row.tau, fam), o);
    const double small = std::pow(2.0, -a.j * n * a.beta);
    const double large = row.tau > 0.0 ? std::pow(2.0, 2.0 * a.j * n) * std::pow(row.tau, -n)
                                       : std::numeric_limits<double>::infinity();
    row.bound = std::pow(2.0, a.j * a.alpha) * std::min(small, large);
    row.ratio = row.norm / row.bound;
    res.A = std::max(res.A, row.ratio);
    res.rows.push_back(row);
  }
  for (auto& row : res.rows) {
    row.flagged = row.norm > res.A * row.bound;
    res.flagged += row.flagged ? 1 : 0;
  }
  return res;
}

OrthoResult ortho_sweep(const AmplitudeSpec& a, const PhaseCondition& c, const CutoffFamily& fam,
                        const OrthoOptions& o) {
  if (o.jprimes.size() < 3) throw InvalidArgument("ortho sweep needs >= 3 values of j'");
  for (int jp : o.jprimes)
    if (jp < o.j) throw InvalidArgument("ortho sweep needs j' >= j");
  const std::vector<double> band = band_samples(o.epsilon, o.interior);
  OrthoResult res;
  AmplitudeSpec aj = a;
  aj.j = o.j;
  for (int jp : o.jprimes) {
    AmplitudeSpec ajp = a;
    ajp.j = jp;
    double best = 0.0;
    for (double s : band) {
      OrthoRow row;
      row.j = o.j;
      row.jprime = jp;
      row.s = s;
      row.tau = tau_for(jp, a.beta, s);
      const TwistedPiece pj = unrescaled_piece(aj, c, row.tau, fam);
      const TwistedPiece pjp = unrescaled_piece(ajp, c, row.tau, fam);
      row.composed = opnorm::twisted_radial_product_norm(pj.kernel, pjp.kernel, pj.sigma, o.spectral).norm;
      row.norm_j = piece_norm(pj, o.spectral);
      row.norm_jprime = jp == o.j ? row.norm_j : piece_norm(pjp, o.spectral);
      row.submultiplicative = row.composed <= row.norm_j * row.norm_jprime * (1.0 + 1e-9);
      res.submultiplicative = res.submultiplicative && row.submultiplicative;
      best = std::max(best, row.composed);
      res.rows.push_back(row);
    }
    const int k = jp - o.j;
    res.gains[k] = std::max(res.gains[k], best);
  }
  if (res.gains.size() < 3) throw InvalidArgument("ortho sweep needs >= 3 distinct |j - j'|");
  std::vector<double> xs, ys;
  for (const auto& [k, g] : res.gains) {
    xs.push_back(std::ldexp(1.0, k));
    ys.push_back(g);
  }
  const opnorm::SlopeFit f = opnorm::fit_slope(xs, ys);
  res.slope = f.slope;
  res.slope_stderr = f.stderr_;
  return res;
}

CotlarBound cotlar_assemble(const std::map<int, double>& gains) {
  if (gains.size() < 2) throw InvalidArgument("Cotlar assembly needs >= 2 gains");
  double sx = 0.0, sy = 0.0;
  CotlarBound out;
  for (const auto& [k, g] : gains) {
    if (k < 0) throw InvalidArgument("gain offsets |j - j'| must be >= 0");
    if (!(g > 0.0) || !std::isfinite(g)) throw InvalidArgument("gains must be positive and finite");
    out.partial += std::sqrt(g);
    sx += k;
    sy += 0.5 * std::log2(g);
  }
  const double m = static_cast<double>(gains.size());
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [k, g] : gains) {
    sxx += (k - mx) * (k - mx);
    sxy += (k - mx) * (0.5 * std::log2(g) - my);
  }
  out.rate = sxy / sxx;
  if (!(out.rate < 0.0))
    throw InvalidArgument("gains do not decay in |j - j'| (fitted log2 rate " + std::to_string(out.rate) +
                          "); the Cotlar-Stein sum diverges");
  const double q = std::exp2(out.rate);
  out.tail = std::sqrt(gains.rbegin()->second) * q / (1.0 - q);
  out.total = out.partial + out.tail;
  return out;
}

}  // namespace foldlab::decomp
