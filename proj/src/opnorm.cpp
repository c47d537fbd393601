#include "foldlab/opnorm.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "foldlab/bump.hpp"
#include "foldlab/errors.hpp"
#include "foldlab/parallel.hpp"

namespace foldlab::opnorm {

namespace {

constexpr int kMaxDim = 8;
// Reductions are split into this many chunks regardless of the thread count.
constexpr std::size_t kReduceChunks = 16;

using Anchor = std::optional<std::pair<std::vector<double>, std::vector<double>>>;

bool inside(const Box& b, const double* p) {
  for (int a = 0; a < b.dim(); ++a) {
    const auto& [lo, hi] = b.axes[static_cast<std::size_t>(a)];
    if (p[a] < lo || p[a] > hi) return false;
  }
  return true;
}

double dist(const double* x, const double* y, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

double norm2(const double* g, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += g[i] * g[i];
  return std::sqrt(s);
}

std::pair<std::vector<double>, std::vector<double>> resolve_anchor(const Amplitude& amp,
                                                                  const Anchor& anchor) {
  if (anchor) return *anchor;
  return {amp.x_box().center(), amp.y_box().center()};
}

double vnorm(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

cplx vdot(std::span<const cplx> a, std::span<const cplx> b) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

// Sparse rows of the weighted kernel.
class CachedMap final : public LinearMap {
 public:
  CachedMap(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  std::size_t rows() const override { return rows_; }
  std::size_t cols() const override { return cols_; }

  void apply(std::span<const cplx> in, std::span<cplx> out) const override {
    parallel_chunks(rows_, kReduceChunks, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        cplx acc = 0.0;
        for (std::size_t p = start[i]; p < start[i + 1]; ++p) acc += vals[p] * in[col[p]];
        out[i] = acc;
      }
    });
  }

  void apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const override {
    const std::size_t chunks = std::min(kReduceChunks, std::max<std::size_t>(rows_, 1));
    partial_.assign(chunks * cols_, cplx(0.0));
    parallel_chunks(rows_, chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
      cplx* acc = partial_.data() + c * cols_;
      for (std::size_t i = b; i < e; ++i) {
        const cplx v = in[i];
        for (std::size_t p = start[i]; p < start[i + 1]; ++p) acc[col[p]] += std::conj(vals[p]) * v;
      }
    });
    std::fill(out.begin(), out.end(), cplx(0.0));
    for (std::size_t c = 0; c < chunks; ++c) {
      const cplx* acc = partial_.data() + c * cols_;
      for (std::size_t j = 0; j < cols_; ++j) out[j] += acc[j];
    }
  }

  std::vector<std::size_t> start;
  std::vector<std::uint32_t> col;
  std::vector<cplx> vals;

 private:
  std::size_t rows_, cols_;
  mutable std::vector<cplx> partial_;
};

// Recomputes kernel rows on every application.
class StreamingMap final : public LinearMap {
 public:
  explicit StreamingMap(const OscOperator& op) : op_(op) {}

  std::size_t rows() const override { return op_.rows(); }
  std::size_t cols() const override { return op_.cols(); }

  void apply(std::span<const cplx> in, std::span<cplx> out) const override {
    parallel_chunks(rows(), kReduceChunks, [&](std::size_t, std::size_t b, std::size_t e) {
      std::vector<std::uint32_t> cols;
      std::vector<cplx> vals;
      std::vector<double> scratch;
      for (std::size_t i = b; i < e; ++i) {
        op_.row_entries(i, cols, vals, scratch);
        cplx acc = 0.0;
        for (std::size_t p = 0; p < cols.size(); ++p) acc += vals[p] * in[cols[p]];
        out[i] = acc;
      }
    });
  }

  void apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const override {
    const std::size_t nc = cols();
    const std::size_t chunks = std::min(kReduceChunks, std::max<std::size_t>(rows(), 1));
    std::vector<cplx> partial(chunks * nc, cplx(0.0));
    parallel_chunks(rows(), chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
      std::vector<std::uint32_t> cols;
      std::vector<cplx> vals;
      std::vector<double> scratch;
      cplx* acc = partial.data() + c * nc;
      for (std::size_t i = b; i < e; ++i) {
        op_.row_entries(i, cols, vals, scratch);
        for (std::size_t p = 0; p < cols.size(); ++p) acc[cols[p]] += std::conj(vals[p]) * in[i];
      }
    });
    std::fill(out.begin(), out.end(), cplx(0.0));
    for (std::size_t c = 0; c < chunks; ++c)
      for (std::size_t j = 0; j < nc; ++j) out[j] += partial[c * nc + j];
  }

 private:
  const OscOperator& op_;
};

std::vector<cplx> random_start(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<cplx> v(n);
  for (auto& z : v) {
    const double re = g(rng);
    const double im = g(rng);
    z = cplx(re, im);
  }
  const double nv = vnorm(v);
  for (auto& z : v) z /= nv;
  return v;
}

NormEstimate power_norm(const LinearMap& m, const NormOptions& o) {
  NormEstimate est;
  std::vector<cplx> v = random_start(m.cols(), o.seed);
  std::vector<cplx> mv(m.rows()), w(m.cols());
  double prev = 0.0;
  for (int it = 1; it <= o.max_iter; ++it) {
    m.apply(v, mv);
    const double sigma = vnorm(mv);
    m.apply_adjoint(mv, w);
    est.iterations = it;
    est.norm = sigma;
    if (sigma == 0.0) {
      est.converged = true;
      est.residual = 0.0;
      return est;
    }
    const double theta = sigma * sigma;
    double r2 = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) r2 += std::norm(w[j] - theta * v[j]);
    est.eigen_residual = std::sqrt(r2) / theta;
    est.residual = it > 1 ? std::abs(sigma - prev) / sigma : 1.0;
    if (it > 1 && est.residual <= o.tol) {
      est.converged = true;
      return est;
    }
    prev = sigma;
    const double nw = vnorm(w);
    for (std::size_t j = 0; j < w.size(); ++j) v[j] = w[j] / nw;
  }
  return est;
}

NormEstimate lanczos_norm(const LinearMap& m, const NormOptions& o) {
  NormEstimate est;
  const std::size_t n = m.cols();
  std::vector<std::vector<cplx>> basis;
  basis.push_back(random_start(n, o.seed));
  std::vector<double> alpha, beta;
  std::vector<cplx> mv(m.rows()), w(n);
  double prev = 0.0;
  int stagnant = 0;
  for (int it = 1; it <= o.max_iter; ++it) {
    const auto& v = basis.back();
    m.apply(v, mv);
    m.apply_adjoint(mv, w);
    const double a = vdot(v, w).real();
    alpha.push_back(a);
    for (std::size_t j = 0; j < n; ++j) w[j] -= a * v[j];
    if (basis.size() > 1) {
      const auto& vp = basis[basis.size() - 2];
      for (std::size_t j = 0; j < n; ++j) w[j] -= beta.back() * vp[j];
    }
    // full reorthogonalization, twice
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) {
        const cplx c = vdot(q, w);
        for (std::size_t j = 0; j < n; ++j) w[j] -= c * q[j];
      }
    const double b = vnorm(w);

    const auto k = static_cast<Eigen::Index>(alpha.size());
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), k);
    Eigen::VectorXd sub(std::max<Eigen::Index>(k - 1, 0));
    for (Eigen::Index i = 0; i + 1 < k; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const double theta = es.eigenvalues()[k - 1];
    const double last = es.eigenvectors()(k - 1, k - 1);

    est.iterations = it;
    if (!(theta > 0.0)) {
      est.norm = 0.0;
      est.converged = true;
      return est;
    }
    const double sigma = std::sqrt(theta);
    est.norm = sigma;
    est.eigen_residual = b * std::abs(last) / theta;
    est.residual = it > 1 ? std::abs(sigma - prev) / sigma : 1.0;
    stagnant = (it > 1 && est.residual <= 1e-3 * o.tol) ? stagnant + 1 : 0;
    const bool exhausted = b <= 1e-14 * std::sqrt(theta) || static_cast<std::size_t>(it) >= n;
    if (est.eigen_residual <= o.tol || exhausted || stagnant >= 5) {
      est.converged = true;
      return est;
    }
    prev = sigma;
    beta.push_back(b);
    std::vector<cplx> next(n);
    for (std::size_t j = 0; j < n; ++j) next[j] = w[j] / b;
    basis.push_back(std::move(next));
  }
  return est;
}

}  // namespace

// ---------------------------------------------------------------- Box / grid

Box Box::cube(int dim, double lo, double hi) {
  if (dim < 1) throw InvalidArgument("box dimension must be positive");
  if (!(hi > lo)) throw InvalidArgument("box interval must have hi > lo");
  Box b;
  b.axes.assign(static_cast<std::size_t>(dim), {lo, hi});
  return b;
}

Box Box::centered(const std::vector<double>& center, double half_width) {
  if (center.empty()) throw InvalidArgument("box dimension must be positive");
  if (!(half_width > 0.0)) throw InvalidArgument("box half width must be positive");
  Box b;
  for (double c : center) b.axes.emplace_back(c - half_width, c + half_width);
  return b;
}

double Box::volume() const {
  double v = 1.0;
  for (int a = 0; a < dim(); ++a) v *= extent(a);
  return v;
}

std::vector<double> Box::center() const {
  std::vector<double> c;
  for (const auto& [lo, hi] : axes) c.push_back(0.5 * (lo + hi));
  return c;
}

GridSpec GridSpec::uniform(Box box, int points_per_axis) {
  if (points_per_axis < 1) throw InvalidArgument("points_per_axis must be >= 1");
  if (box.dim() < 1 || box.dim() > kMaxDim) throw InvalidArgument("grid dimension out of range");
  for (int a = 0; a < box.dim(); ++a)
    if (!(box.extent(a) > 0.0)) throw InvalidArgument("grid box has an empty axis");
  GridSpec g;
  g.points.assign(static_cast<std::size_t>(box.dim()), points_per_axis);
  g.box = std::move(box);
  return g;
}

double GridSpec::weight() const {
  double w = 1.0;
  for (int a = 0; a < dim(); ++a) w *= spacing(a);
  return w;
}

std::size_t GridSpec::total_nodes() const {
  std::size_t n = 1;
  for (int p : points) n *= static_cast<std::size_t>(p);
  return n;
}

void GridSpec::node(std::size_t index, double* out) const {
  for (int a = dim() - 1; a >= 0; --a) {
    const auto np = static_cast<std::size_t>(points[static_cast<std::size_t>(a)]);
    const std::size_t i = index % np;
    index /= np;
    out[a] = box.axes[static_cast<std::size_t>(a)].first + (static_cast<double>(i) + 0.5) * spacing(a);
  }
}

GridSpec GridSpec::refined(double factor) const {
  if (!(factor > 0.0)) throw InvalidArgument("refinement factor must be positive");
  GridSpec g = *this;
  for (auto& p : g.points) p = std::max(1, static_cast<int>(std::ceil(p * factor)));
  return g;
}

// ---------------------------------------------------------------- Amplitude

Amplitude::Amplitude(Box x_box, Box y_box, PairFn pair, PointFn x_factor, PointFn y_factor)
    : x_box_(std::move(x_box)),
      y_box_(std::move(y_box)),
      pair_(std::move(pair)),
      x_factor_(std::move(x_factor)),
      y_factor_(std::move(y_factor)) {
  if (x_box_.dim() < 1 || y_box_.dim() < 1) throw InvalidArgument("amplitude boxes must be non-empty");
  if (x_box_.dim() > kMaxDim || y_box_.dim() > kMaxDim)
    throw InvalidArgument("amplitude dimension too large");
}

Amplitude Amplitude::constant(Box x_box, Box y_box) {
  return Amplitude(std::move(x_box), std::move(y_box), {});
}

Amplitude Amplitude::smooth_bump(Box x_box, Box y_box) {
  auto bump = [](const Box& b) {
    return [b](const double* p) {
      double v = 1.0;
      for (int a = 0; a < b.dim() && v != 0.0; ++a) {
        const auto& [lo, hi] = b.axes[static_cast<std::size_t>(a)];
        v *= interval_bump(p[a], lo, hi);
      }
      return v;
    };
  };
  PointFn fx = bump(x_box);
  PointFn fy = bump(y_box);
  return Amplitude(std::move(x_box), std::move(y_box), {}, std::move(fx), std::move(fy));
}

double Amplitude::operator()(const double* x, const double* y) const {
  const double a = x_factor(x);
  if (a == 0.0) return 0.0;
  const double b = y_factor(y);
  if (b == 0.0) return 0.0;
  return a * b * pair(x, y);
}

Amplitude Amplitude::dilated(double c) const {
  if (!(c > 0.0)) throw InvalidArgument("dilation factor must be positive");
  auto shrink = [c](const Box& b) {
    Box s = b;
    for (auto& [lo, hi] : s.axes) {
      lo /= c;
      hi /= c;
    }
    return s;
  };
  const int dx = x_box_.dim();
  const int dy = y_box_.dim();
  PairFn pair;
  if (pair_)
    pair = [f = pair_, c, dx, dy](const double* x, const double* y) {
      double sx[kMaxDim], sy[kMaxDim];
      for (int i = 0; i < dx; ++i) sx[i] = c * x[i];
      for (int i = 0; i < dy; ++i) sy[i] = c * y[i];
      return f(sx, sy);
    };
  auto point = [c](const PointFn& f, int d) -> PointFn {
    if (!f) return {};
    return [f, c, d](const double* p) {
      double s[kMaxDim];
      for (int i = 0; i < d; ++i) s[i] = c * p[i];
      return f(s);
    };
  };
  return Amplitude(shrink(x_box_), shrink(y_box_), std::move(pair), point(x_factor_, dx),
                   point(y_factor_, dy));
}

// ---------------------------------------------------------------- resolution

GradientBounds gradient_bounds(const phase::PhaseSpec& p, const Amplitude& amp, Resolution mode,
                               const Anchor& anchor, int samples_per_axis) {
  GradientBounds g;
  if (mode == Resolution::None) return g;
  const int d = p.dimension();
  if (amp.x_box().dim() != d || amp.y_box().dim() != d)
    throw InvalidArgument("amplitude dimension does not match the phase dimension");
  int s = samples_per_axis;
  if (s <= 0) s = d == 1 ? 400 : d == 2 ? 28 : 8;
  const GridSpec gx = GridSpec::uniform(amp.x_box(), s);
  const GridSpec gy = GridSpec::uniform(amp.y_box(), s);

  std::vector<double> xs, ys;
  std::vector<std::size_t> xi, yi;
  double buf[kMaxDim];
  for (std::size_t i = 0; i < gx.total_nodes(); ++i) {
    gx.node(i, buf);
    if (amp.x_factor(buf) != 0.0) xs.insert(xs.end(), buf, buf + d);
  }
  for (std::size_t j = 0; j < gy.total_nodes(); ++j) {
    gy.node(j, buf);
    if (amp.y_factor(buf) != 0.0) ys.insert(ys.end(), buf, buf + d);
  }
  const std::size_t nx = xs.size() / static_cast<std::size_t>(d);
  const std::size_t ny = ys.size() / static_cast<std::size_t>(d);
  const auto [xc, yc] = resolve_anchor(amp, anchor);
  const bool demod = mode == Resolution::Norm;

  // gradients at the anchor slices, NaN where the phase is singular
  auto slice = [&](const std::vector<double>& pts, std::size_t count, const double* fixed,
                   bool fixed_is_x) {
    std::vector<double> out(count * static_cast<std::size_t>(d), std::nan(""));
    if (!demod) return out;
    double gxv[kMaxDim], gyv[kMaxDim];
    for (std::size_t i = 0; i < count; ++i) {
      const double* q = &pts[i * static_cast<std::size_t>(d)];
      if (p.singular() && dist(q, fixed, d) <= 0.0) continue;
      if (fixed_is_x) {
        phase::gradient(p, fixed, q, gxv, gyv);
        std::copy(gyv, gyv + d, &out[i * static_cast<std::size_t>(d)]);
      } else {
        phase::gradient(p, q, fixed, gxv, gyv);
        std::copy(gxv, gxv + d, &out[i * static_cast<std::size_t>(d)]);
      }
    }
    return out;
  };
  const std::vector<double> gy_anchor = slice(ys, ny, xc.data(), true);   // grad_y Phi(x_c, y)
  const std::vector<double> gx_anchor = slice(xs, nx, yc.data(), false);  // grad_x Phi(x, y_c)

  std::vector<GradientBounds> part(kReduceChunks);
  std::vector<double> min_sep(kReduceChunks, std::numeric_limits<double>::infinity());
  parallel_chunks(nx, kReduceChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
    double gxv[kMaxDim], gyv[kMaxDim], dv[kMaxDim];
    for (std::size_t i = b; i < e; ++i) {
      const double* x = &xs[i * static_cast<std::size_t>(d)];
      for (std::size_t j = 0; j < ny; ++j) {
        const double* y = &ys[j * static_cast<std::size_t>(d)];
        if (amp(x, y) == 0.0) continue;
        if (p.singular()) {
          const double r = dist(x, y, d);
          min_sep[c] = std::min(min_sep[c], r);
          if (r <= 0.0) continue;
        }
        phase::gradient(p, x, y, gxv, gyv);
        const double* ax = &gx_anchor[i * static_cast<std::size_t>(d)];
        const double* ay = &gy_anchor[j * static_cast<std::size_t>(d)];
        if (demod && !std::isnan(ax[0])) {
          for (int k = 0; k < d; ++k) dv[k] = gxv[k] - ax[k];
          part[c].x = std::max(part[c].x, norm2(dv, d));
        } else {
          part[c].x = std::max(part[c].x, norm2(gxv, d));
        }
        if (demod && !std::isnan(ay[0])) {
          for (int k = 0; k < d; ++k) dv[k] = gyv[k] - ay[k];
          part[c].y = std::max(part[c].y, norm2(dv, d));
        } else {
          part[c].y = std::max(part[c].y, norm2(gyv, d));
        }
      }
    }
  });
  for (const auto& pc : part) {
    g.x = std::max(g.x, pc.x);
    g.y = std::max(g.y, pc.y);
  }
  return g;
}

namespace {

// Smallest |x - y| on the sampled amplitude support.
double sampled_min_separation(const phase::PhaseSpec& p, const Amplitude& amp) {
  const int d = p.dimension();
  const int s = d == 1 ? 400 : d == 2 ? 28 : 8;
  const GridSpec gx = GridSpec::uniform(amp.x_box(), s);
  const GridSpec gy = GridSpec::uniform(amp.y_box(), s);
  double x[kMaxDim], y[kMaxDim];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < gx.total_nodes(); ++i) {
    gx.node(i, x);
    if (amp.x_factor(x) == 0.0) continue;
    for (std::size_t j = 0; j < gy.total_nodes(); ++j) {
      gy.node(j, y);
      if (amp(x, y) == 0.0) continue;
      best = std::min(best, dist(x, y, d));
    }
  }
  return best;
}

int required_points(double extent, double lambda, double grad, double ppw) {
  return static_cast<int>(std::ceil(extent * lambda * grad * ppw / (2.0 * std::numbers::pi)));
}

}  // namespace

// ---------------------------------------------------------------- OscOperator

OscOperator::OscOperator(phase::PhaseSpec phase, Amplitude amplitude, double lambda,
                         GridSpec x_grid, GridSpec y_grid, OperatorOptions options)
    : phase_(std::move(phase)),
      amplitude_(std::move(amplitude)),
      lambda_(lambda),
      x_grid_(std::move(x_grid)),
      y_grid_(std::move(y_grid)),
      options_(std::move(options)) {
  phase_.validate();
  const int d = phase_.dimension();
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw InvalidArgument("lambda must be >= 0");
  if (x_grid_.dim() != d || y_grid_.dim() != d)
    throw InvalidArgument("grid dimension does not match the phase dimension");
  if (amplitude_.x_box().dim() != d || amplitude_.y_box().dim() != d)
    throw InvalidArgument("amplitude dimension does not match the phase dimension");
  if (!(options_.points_per_wavelength > 0.0))
    throw InvalidArgument("points_per_wavelength must be positive");

  if (phase_.singular() && options_.min_separation > 0.0) {
    const double sep = sampled_min_separation(phase_, amplitude_);
    if (sep < options_.min_separation) {
      std::ostringstream os;
      os << "amplitude support reaches |x-y| = " << sep << " < " << options_.min_separation
         << " for a singular phase";
      throw InvalidArgument(os.str());
    }
  }

  if (options_.resolution != Resolution::None && lambda_ > 0.0) {
    const GradientBounds gb = gradient_bounds(phase_, amplitude_, options_.resolution, options_.anchor);
    const double limit = 2.0 * std::numbers::pi / options_.points_per_wavelength;
    int need = 0;
    bool bad = false;
    for (int a = 0; a < d; ++a) {
      const int ny = required_points(y_grid_.box.extent(a), lambda_, gb.y, options_.points_per_wavelength);
      need = std::max(need, ny);
      if (y_grid_.spacing(a) * lambda_ * gb.y > limit) bad = true;
      if (options_.resolution == Resolution::Norm) {
        const int nx = required_points(x_grid_.box.extent(a), lambda_, gb.x, options_.points_per_wavelength);
        need = std::max(need, nx);
        if (x_grid_.spacing(a) * lambda_ * gb.x > limit) bad = true;
      }
    }
    if (bad) {
      std::ostringstream os;
      os << "grid violates the resolution rule (" << options_.points_per_wavelength
         << " points per oscillation); need at least N = " << need << " points per axis";
      throw ResolutionError(os.str(), need);
    }
  }

  double buf[kMaxDim];
  for (std::size_t i = 0; i < x_grid_.total_nodes(); ++i) {
    x_grid_.node(i, buf);
    if (!inside(amplitude_.x_box(), buf)) continue;
    const double f = amplitude_.x_factor(buf);
    if (f == 0.0) continue;
    x_index_.push_back(i);
    x_coords_.insert(x_coords_.end(), buf, buf + d);
    x_fac_.push_back(f);
  }
  for (std::size_t j = 0; j < y_grid_.total_nodes(); ++j) {
    y_grid_.node(j, buf);
    if (!inside(amplitude_.y_box(), buf)) continue;
    const double f = amplitude_.y_factor(buf);
    if (f == 0.0) continue;
    y_index_.push_back(j);
    y_coords_.insert(y_coords_.end(), buf, buf + d);
    y_fac_.push_back(f);
  }
  if (y_index_.size() > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument("too many y nodes");
}

cplx OscOperator::kernel(std::size_t i, std::size_t j) const {
  const double* x = x_node(i);
  const double* y = y_node(j);
  const double a = x_fac_[i] * y_fac_[j] * amplitude_.pair(x, y);
  if (a == 0.0) return 0.0;
  return options_.prefactor * std::polar(a, lambda_ * phase::eval(phase_, x, y));
}

void OscOperator::apply(std::span<const cplx> f, std::span<cplx> g) const {
  if (f.size() != cols() || g.size() != rows()) throw InvalidArgument("apply: vector size mismatch");
  const double w = y_grid_.weight();
  parallel_chunks(rows(), kReduceChunks, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j < cols(); ++j) acc += kernel(i, j) * f[j];
      g[i] = acc * w;
    }
  });
}

void OscOperator::row_entries(std::size_t i, std::vector<std::uint32_t>& cols,
                              std::vector<cplx>& vals, std::vector<double>& scratch) const {
  cols.clear();
  vals.clear();
  scratch.clear();
  const double* x = x_node(i);
  const double base = x_fac_[i] * std::sqrt(x_grid_.weight() * y_grid_.weight());
  if (base == 0.0) return;
  // amplitudes first, then phases for the surviving entries
  for (std::size_t j = 0; j < this->cols(); ++j) {
    const double* y = y_node(j);
    const double a = y_fac_[j] * amplitude_.pair(x, y);
    if (a == 0.0) continue;
    cols.push_back(static_cast<std::uint32_t>(j));
    scratch.push_back(base * a);
  }
  vals.resize(cols.size());
  for (std::size_t p = 0; p < cols.size(); ++p) {
    const double ph = lambda_ * phase::eval(phase_, x, y_node(cols[p]));
    vals[p] = options_.prefactor * cplx(scratch[p] * std::cos(ph), scratch[p] * std::sin(ph));
  }
}

std::unique_ptr<LinearMap> OscOperator::weighted_map(std::size_t cache_entries) const {
  const std::size_t nr = rows();
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(64, nr));
  struct Part {
    std::vector<std::size_t> counts;
    std::vector<std::uint32_t> col;
    std::vector<cplx> vals;
  };
  std::vector<Part> parts(chunks);
  std::atomic<std::size_t> total{0};
  std::atomic<bool> overflow{false};
  parallel_chunks(nr, chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
    std::vector<std::uint32_t> cols;
    std::vector<cplx> vals;
    std::vector<double> scratch;
    Part& part = parts[c];
    for (std::size_t i = b; i < e && !overflow.load(); ++i) {
      row_entries(i, cols, vals, scratch);
      if (total.fetch_add(cols.size()) + cols.size() > cache_entries) {
        overflow = true;
        return;
      }
      part.counts.push_back(cols.size());
      part.col.insert(part.col.end(), cols.begin(), cols.end());
      part.vals.insert(part.vals.end(), vals.begin(), vals.end());
    }
  });
  if (overflow) return std::make_unique<StreamingMap>(*this);

  auto map = std::make_unique<CachedMap>(nr, cols());
  map->start.reserve(nr + 1);
  map->start.push_back(0);
  map->col.reserve(total.load());
  map->vals.reserve(total.load());
  for (auto& part : parts) {
    for (std::size_t cnt : part.counts) map->start.push_back(map->start.back() + cnt);
    map->col.insert(map->col.end(), part.col.begin(), part.col.end());
    map->vals.insert(map->vals.end(), part.vals.begin(), part.vals.end());
    part = Part{};
  }
  return map;
}

Eigen::MatrixXcd OscOperator::dense_weighted() const {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(rows()),
                                              static_cast<Eigen::Index>(cols()));
  std::vector<std::uint32_t> cols;
  std::vector<cplx> vals;
  std::vector<double> scratch;
  for (std::size_t i = 0; i < rows(); ++i) {
    row_entries(i, cols, vals, scratch);
    for (std::size_t p = 0; p < cols.size(); ++p)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols[p])) = vals[p];
  }
  return m;
}

// ---------------------------------------------------------------- builders

std::pair<GridSpec, GridSpec> auto_grids(const phase::PhaseSpec& p, const Amplitude& amp,
                                         double lambda, const GridRule& rule, Resolution mode,
                                         const Anchor& anchor) {
  if (!(rule.points_per_wavelength > 0.0) || !(rule.safety >= 1.0) || !(rule.refine >= 1.0) ||
      rule.min_points < 1)
    throw InvalidArgument("invalid grid rule");
  const GradientBounds gb =
      mode == Resolution::None ? GradientBounds{} : gradient_bounds(p, amp, mode, anchor);
  // Quadrature mode resolves the full gradient in x as well; harmless and keeps both sides alike.
  auto size = [&](const Box& box, double grad) {
    GridSpec g;
    g.box = box;
    for (int a = 0; a < box.dim(); ++a) {
      const int need = required_points(box.extent(a), lambda, grad, rule.points_per_wavelength);
      const int n = static_cast<int>(std::ceil(std::max<double>(need * rule.safety, rule.min_points) * rule.refine));
      g.points.push_back(std::max(n, 1));
    }
    if (g.total_nodes() > rule.max_nodes) {
      std::ostringstream os;
      os << "resolution rule needs " << g.total_nodes() << " nodes, above the cap " << rule.max_nodes;
      throw ResolutionError(os.str(), g.points.front());
    }
    return g;
  };
  return {size(amp.x_box(), gb.x), size(amp.y_box(), gb.y)};
}

OscOperator build_operator(const phase::PhaseSpec& p, const Amplitude& amp, double lambda,
                           const GridSpec& grid, OperatorOptions options) {
  // a grid without a box takes the amplitude boxes
  GridSpec gx = grid;
  GridSpec gy = grid;
  if (grid.box.dim() == 0) {
    gx.box = amp.x_box();
    gy.box = amp.y_box();
    gx.points.assign(static_cast<std::size_t>(gx.box.dim()), grid.points.empty() ? 1 : grid.points.front());
    gy.points.assign(static_cast<std::size_t>(gy.box.dim()), grid.points.empty() ? 1 : grid.points.front());
  }
  return OscOperator(p, amp, lambda, std::move(gx), std::move(gy), std::move(options));
}

OscOperator build_operator(const phase::PhaseSpec& p, const Amplitude& amp, double lambda,
                           const GridRule& rule, OperatorOptions options) {
  options.points_per_wavelength = rule.points_per_wavelength;
  auto [gx, gy] = auto_grids(p, amp, lambda, rule, options.resolution, options.anchor);
  return OscOperator(p, amp, lambda, std::move(gx), std::move(gy), std::move(options));
}

// ---------------------------------------------------------------- maps

AdjointProduct::AdjointProduct(const LinearMap& a, const LinearMap& b) : a_(a), b_(b) {
  if (a.rows() != b.rows()) throw InvalidArgument("A^H B needs A and B with equal row counts");
}

void AdjointProduct::apply(std::span<const cplx> in, std::span<cplx> out) const {
  tmp_.resize(b_.rows());
  b_.apply(in, tmp_);
  a_.apply_adjoint(tmp_, out);
}

void AdjointProduct::apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const {
  tmp_.resize(a_.rows());
  a_.apply(in, tmp_);
  b_.apply_adjoint(tmp_, out);
}

void DenseMap::apply(std::span<const cplx> in, std::span<cplx> out) const {
  Eigen::Map<const Eigen::VectorXcd> v(in.data(), static_cast<Eigen::Index>(in.size()));
  Eigen::Map<Eigen::VectorXcd>(out.data(), static_cast<Eigen::Index>(out.size())) = m_ * v;
}

void DenseMap::apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const {
  Eigen::Map<const Eigen::VectorXcd> v(in.data(), static_cast<Eigen::Index>(in.size()));
  Eigen::Map<Eigen::VectorXcd>(out.data(), static_cast<Eigen::Index>(out.size())) = m_.adjoint() * v;
}

// ---------------------------------------------------------------- norms

NormEstimate operator_norm(const LinearMap& map, const NormOptions& opts) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("tol must be positive");
  if (opts.max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
  if (map.rows() == 0 || map.cols() == 0) {
    NormEstimate e;
    e.converged = true;
    return e;
  }
  return opts.method == NormMethod::Power ? power_norm(map, opts) : lanczos_norm(map, opts);
}

NormEstimate operator_norm(const OscOperator& op, const NormOptions& opts) {
  const auto map = op.weighted_map(opts.cache_entries);
  return operator_norm(*map, opts);
}

SlopeFit fit_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("fit_slope: size mismatch");
  if (xs.size() < 3) throw InvalidArgument("fit_slope needs at least 3 points");
  const auto n = static_cast<double>(xs.size());
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw InvalidArgument("fit_slope needs positive finite data");
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 1e-300)) throw InvalidArgument("fit_slope: degenerate abscissae");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (f.intercept + f.slope * lx[i]);
    ssr += r * r;
  }
  f.stderr_ = std::sqrt(ssr / (n - 2.0) / sxx);
  return f;
}

void NormDecaySeries::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!(entries[i].norm > 0.0)) throw InvalidArgument("norm series must be positive");
    if (i > 0 && !(entries[i].lambda > entries[i - 1].lambda))
      throw InvalidArgument("norm series lambdas must increase strictly");
  }
}

NormDecaySeries decay_sweep(const phase::PhaseSpec& p, const Amplitude& amp,
                            std::span<const double> lambdas, const SweepOptions& opts) {
  if (lambdas.size() < 4) throw InvalidArgument("decay_sweep needs at least 4 lambdas");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw InvalidArgument("decay_sweep lambdas must be positive");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
      throw InvalidArgument("decay_sweep lambdas must increase strictly");
  }
  NormDecaySeries s;
  OperatorOptions oo;
  oo.resolution = Resolution::Norm;
  oo.anchor = opts.anchor;
  oo.min_separation = opts.min_separation;
  for (double lam : lambdas) {
    const OscOperator op = build_operator(p, amp, lam, opts.rule, oo);
    const NormEstimate e = operator_norm(op, opts.norm);
    if (!e.converged) {
      std::ostringstream os;
      os << "norm estimate did not converge at lambda = " << lam << " (residual " << e.eigen_residual << ")";
      throw ConvergenceError(os.str());
    }
    s.entries.push_back({lam, e.norm, e.iterations, e.eigen_residual, op.rows(), op.cols()});
  }
  s.validate();
  std::vector<double> xs, ys;
  for (const auto& e : s.entries) {
    xs.push_back(e.lambda);
    ys.push_back(e.norm);
  }
  const SlopeFit f = fit_slope(xs, ys);
  s.slope = f.slope;
  s.slope_stderr = f.stderr_;
  s.intercept = f.intercept;
  return s;
}

}  // namespace foldlab::opnorm
