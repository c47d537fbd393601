#include "foldlab/twisted.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "foldlab/errors.hpp"
#include "foldlab/parallel.hpp"

namespace foldlab::opnorm {

namespace {

using cplx = std::complex<double>;
constexpr int kGauss = 16;
constexpr std::size_t kChunks = 16;

struct GaussRule {
  std::array<double, kGauss> x{};
  std::array<double, kGauss> w{};
};

// Golub-Welsch on the Legendre Jacobi matrix.
const GaussRule& gauss_legendre() {
  static const GaussRule rule = [] {
    Eigen::MatrixXd jm = Eigen::MatrixXd::Zero(kGauss, kGauss);
    for (int i = 1; i < kGauss; ++i) {
      const double b = i / std::sqrt(4.0 * i * i - 1.0);
      jm(i, i - 1) = jm(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jm);
    GaussRule g;
    for (int i = 0; i < kGauss; ++i) {
      g.x[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
      const double v = es.eigenvectors()(0, i);
      g.w[static_cast<std::size_t>(i)] = 2.0 * v * v;
    }
    return g;
  }();
  return rule;
}

// Surface area of the unit sphere in R^{2n}.
double sphere_area(int n) { return 2.0 * std::pow(std::numbers::pi, n) / std::tgamma(n); }

struct Quadrature {
  std::vector<double> r, w;
  std::vector<cplx> k;  // kernel values times weight times r^{2n-1}
};

Quadrature radial_quadrature(const RadialKernel& k, double extra_frequency, const SpectralOptions& o) {
  const double freq = k.max_frequency() + extra_frequency + 1.0;
  const double len = k.r_hi - k.r_lo;
  const auto panels = static_cast<std::size_t>(
      std::max<double>(o.min_panels, std::ceil(len * freq / o.radians_per_panel)));
  const GaussRule& g = gauss_legendre();
  Quadrature q;
  q.r.reserve(panels * kGauss);
  const double h = len / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = k.r_lo + h * static_cast<double>(p);
    for (int i = 0; i < kGauss; ++i) {
      const double r = a + 0.5 * h * (g.x[static_cast<std::size_t>(i)] + 1.0);
      const double wt = 0.5 * h * g.w[static_cast<std::size_t>(i)];
      const cplx v = k(r);
      if (v == cplx(0.0)) continue;
      q.r.push_back(r);
      q.w.push_back(wt);
      q.k.push_back(v * wt * std::pow(r, 2 * k.n - 1));
    }
  }
  return q;
}

// J_0 by the Hart rational / Hankel asymptotic approximations (abs. error ~1e-8).
double bessel_j0(double x) {
  const double ax = std::abs(x);
  if (ax < 8.0) {
    const double y = x * x;
    const double a = 57568490574.0 +
                     y * (-13362590354.0 + y * (651619640.7 + y * (-11214424.18 + y * (77392.33017 + y * (-184.9052456)))));
    const double b = 57568490411.0 + y * (1029532985.0 + y * (9494680.718 + y * (59272.64853 + y * (267.8532712 + y))));
    return a / b;
  }
  const double z = 8.0 / ax;
  const double y = z * z;
  const double xx = ax - 0.785398164;
  const double p = 1.0 + y * (-0.1098628627e-2 + y * (0.2734510407e-4 + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
  const double q = -0.1562499995e-1 + y * (0.1430488765e-3 + y * (-0.6911147651e-5 + y * (0.7621095161e-6 - y * 0.934935152e-7)));
  return std::sqrt(0.636619772 / ax) * (std::cos(xx) * p - z * std::sin(xx) * q);
}

// Bessel J_{n-1}; the asymptotic form is accurate far out and much cheaper.
double bessel(int order, double x) {
  if (order == 0) return bessel_j0(x);
  if (x > 200.0 + 10.0 * order * order) {
    const double mu = 4.0 * order * order;
    const double w = x - (0.5 * order + 0.25) * std::numbers::pi;
    const double p = 1.0 - (mu - 1.0) * (mu - 9.0) / (128.0 * x * x);
    const double qq = (mu - 1.0) / (8.0 * x);
    return std::sqrt(2.0 / (std::numbers::pi * x)) * (p * std::cos(w) - qq * std::sin(w));
  }
  return std::cyl_bessel_j(static_cast<double>(order), x);
}

cplx fourier_at(const Quadrature& q, int n, double xi) {
  cplx s = 0.0;
  if (xi == 0.0) {
    for (std::size_t i = 0; i < q.r.size(); ++i) s += q.k[i];
    return s * sphere_area(n);
  }
  // k^(xi) = (2 pi)^n xi^{1-n} int k(r) J_{n-1}(xi r) r^n dr
  for (std::size_t i = 0; i < q.r.size(); ++i)
    s += q.k[i] * bessel(n - 1, xi * q.r[i]) * std::pow(q.r[i], 1 - n);
  return s * std::pow(2.0 * std::numbers::pi, n) * std::pow(xi, 1 - n);
}

// Maximizes f on [0, hi] by sampling plus golden-section refinement of the best samples.
SpectralNorm sup_over_frequency(const std::function<double(double)>& f, double hi, double step) {
  const auto count = static_cast<std::size_t>(std::ceil(hi / step)) + 1;
  std::vector<double> vals(count);
  parallel_chunks(count, kChunks, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) vals[i] = f(step * static_cast<double>(i));
  });
  SpectralNorm best;
  best.modes = count;
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  const std::size_t top = std::min<std::size_t>(4, count);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
  for (std::size_t t = 0; t < top; ++t) {
    const std::size_t i = order[t];
    if (vals[i] > best.norm) {
      best.norm = vals[i];
      best.argmax = step * static_cast<double>(i);
    }
    double a = std::max(0.0, step * (static_cast<double>(i) - 1.0));
    double b = step * (static_cast<double>(i) + 1.0);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 40; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = f(d);
      }
    }
    const double x = 0.5 * (a + b);
    const double fx = f(x);
    if (fx > best.norm) {
      best.norm = fx;
      best.argmax = x;
    }
  }
  return best;
}

}  // namespace

void RadialKernel::validate() const {
  if (!amplitude || !phase) throw InvalidArgument("radial kernel needs amplitude and phase");
  if (!(r_lo >= 0.0) || !(r_hi > r_lo)) throw InvalidArgument("radial kernel needs 0 <= r_lo < r_hi");
  if (n < 1) throw InvalidArgument("radial kernel needs n >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("radial kernel needs lambda >= 0");
}

cplx RadialKernel::operator()(double r) const {
  const double a = amplitude(r);
  if (a == 0.0) return 0.0;
  return prefactor * std::polar(a, lambda * phase(r));
}

double RadialKernel::max_frequency() const {
  const int samples = 4000;
  const double h = (r_hi - r_lo) / samples;
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double a = r_lo + h * i;
    const double b = a + h;
    if (amplitude(a) == 0.0 && amplitude(b) == 0.0) continue;
    best = std::max(best, std::abs(phase(b) - phase(a)) / h);
  }
  return lambda * best;
}

std::size_t mode_count(const RadialKernel& k, double sigma, const SpectralOptions& o) {
  k.validate();
  const double s = std::abs(sigma);
  if (s == 0.0) throw InvalidArgument("mode_count needs sigma != 0");
  // Laguerre mode k oscillates like J_{n-1}(2 sqrt(k s) r) and reaches out to r^2 ~ 4k/s.
  const double f = k.max_frequency();
  const double est = (f * f + s * s * k.r_hi * k.r_hi) / (4.0 * s);
  // plus a few turning-point (Airy) widths
  const auto count = static_cast<std::size_t>(std::ceil(o.mode_margin * est + 8.0 * std::cbrt(est))) + 64;
  if (count > o.max_modes) throw InvalidArgument("Laguerre mode count exceeds max_modes");
  return count;
}

std::vector<cplx> laguerre_multipliers(const RadialKernel& k, double sigma, std::size_t count,
                                       const SpectralOptions& o) {
  k.validate();
  const double s = std::abs(sigma);
  if (s == 0.0) throw InvalidArgument("laguerre_multipliers needs sigma != 0");
  if (count == 0) return {};
  // mode m oscillates in r at most like 2 sqrt(s m)
  const double extra = 2.0 * std::sqrt(s * static_cast<double>(count + 1));
  const Quadrature q = radial_quadrature(k, extra, o);
  const double a = k.n - 1;
  const std::size_t nodes = q.r.size();
  std::vector<cplx> partial(kChunks * count, cplx(0.0));
  parallel_chunks(nodes, kChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
    cplx* acc = partial.data() + c * count;
    constexpr double kBig = 1e100;
    constexpr double kLogBig = 230.25850929940458;
    for (std::size_t i = b; i < e; ++i) {
      const double x = s * q.r[i] * q.r[i];
      const cplx kv = q.k[i];
      // L_k^{a}(x) e^{-x/2} with the scale kept in log form
      double log_scale = -0.5 * x;
      double fac = std::exp(log_scale);
      double lp = 1.0;
      double l = 1.0 + a - x;
      acc[0] += kv * fac;
      if (count > 1) acc[1] += kv * (l * fac);
      for (std::size_t m = 1; m + 1 < count; ++m) {
        const auto md = static_cast<double>(m);
        const double ln = ((2.0 * md + 1.0 + a - x) * l - (md + a) * lp) / (md + 1.0);
        lp = l;
        l = ln;
        if (std::abs(l) > kBig) {
          l /= kBig;
          lp /= kBig;
          log_scale += kLogBig;
          fac = std::exp(log_scale);
        }
        acc[m + 1] += kv * (l * fac);
      }
    }
  });
  std::vector<cplx> out(count, cplx(0.0));
  for (std::size_t c = 0; c < kChunks; ++c)
    for (std::size_t m = 0; m < count; ++m) out[m] += partial[c * count + m];
  // k!(n-1)!/(k+n-1)! and the sphere area
  double norm_k = 1.0;
  const double area = sphere_area(k.n);
  for (std::size_t m = 0; m < count; ++m) {
    out[m] *= norm_k * area;
    norm_k *= static_cast<double>(m + 1) / static_cast<double>(m + static_cast<std::size_t>(k.n));
  }
  return out;
}

cplx radial_fourier(const RadialKernel& k, double xi, const SpectralOptions& o) {
  k.validate();
  const Quadrature q = radial_quadrature(k, std::abs(xi), o);
  return fourier_at(q, k.n, std::abs(xi));
}

SpectralNorm twisted_radial_norm(const RadialKernel& k, double sigma, const SpectralOptions& o) {
  k.validate();
  if (sigma == 0.0) {
    const double hi = 1.5 * k.max_frequency() + 40.0 / (k.r_hi - k.r_lo);
    const Quadrature q = radial_quadrature(k, hi, o);
    SpectralNorm r = sup_over_frequency([&](double xi) { return std::abs(fourier_at(q, k.n, xi)); },
                                        hi, 0.25 / k.r_hi);
    r.nodes = q.r.size();
    return r;
  }
  const std::size_t count = mode_count(k, sigma, o);
  const auto m = laguerre_multipliers(k, sigma, count, o);
  SpectralNorm r;
  r.modes = count;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = std::abs(m[i]);
    if (v > r.norm) {
      r.norm = v;
      r.argmax = static_cast<double>(i);
    }
  }
  return r;
}

SpectralNorm twisted_radial_product_norm(const RadialKernel& a, const RadialKernel& b, double sigma,
                                         const SpectralOptions& o) {
  a.validate();
  b.validate();
  if (a.n != b.n) throw InvalidArgument("kernels live on different dimensions");
  if (sigma == 0.0) {
    const double hi = 1.5 * std::max(a.max_frequency(), b.max_frequency()) +
                      40.0 / std::min(a.r_hi - a.r_lo, b.r_hi - b.r_lo);
    const Quadrature qa = radial_quadrature(a, hi, o);
    const Quadrature qb = radial_quadrature(b, hi, o);
    return sup_over_frequency(
        [&](double xi) { return std::abs(fourier_at(qa, a.n, xi)) * std::abs(fourier_at(qb, b.n, xi)); },
        hi, 0.25 / std::max(a.r_hi, b.r_hi));
  }
  // The product is carried by the kernel with fewer relevant modes; extend
  // its range until that kernel's multipliers have died out.
  const std::size_t ca = mode_count(a, sigma, o);
  const std::size_t cb = mode_count(b, sigma, o);
  const std::size_t full = std::max(ca, cb);
  const bool a_short = ca <= cb;
  std::size_t count = std::min(ca, cb);
  for (;;) {
    const auto ma = laguerre_multipliers(a, sigma, count, o);
    const auto mb = laguerre_multipliers(b, sigma, count, o);
    const auto& shorter = a_short ? ma : mb;
    double peak = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      peak = std::max(peak, std::abs(shorter[i]));
      if (i >= count / 2) tail = std::max(tail, std::abs(shorter[i]));
    }
    if (count >= full || tail <= 1e-8 * peak) {
      SpectralNorm r;
      r.modes = count;
      for (std::size_t i = 0; i < count; ++i) {
        const double v = std::abs(ma[i]) * std::abs(mb[i]);
        if (v > r.norm) {
          r.norm = v;
          r.argmax = static_cast<double>(i);
        }
      }
      return r;
    }
    count = std::min(full, 2 * count);
  }
}

}  // namespace foldlab::opnorm
