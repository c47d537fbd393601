#pragma once

// Discretized oscillatory integral operators
//   T_lambda f(x) = int e^{i lambda Phi(x,y)} Psi(x,y) f(y) dy
// on midpoint grids, their matrix-free application, and L^2 operator-norm
// estimation by Krylov iteration on T^* T.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "foldlab/phase.hpp"

namespace foldlab::opnorm {

using cplx = std::complex<double>;

/// Axis-aligned box, one [lo, hi] interval per axis.
struct Box {
  std::vector<std::pair<double, double>> axes;

  static Box cube(int dim, double lo, double hi);
  static Box centered(const std::vector<double>& center, double half_width);
  int dim() const noexcept { return static_cast<int>(axes.size()); }
  double extent(int axis) const { return axes[static_cast<std::size_t>(axis)].second - axes[static_cast<std::size_t>(axis)].first; }
  double volume() const;
  std::vector<double> center() const;
};

/// Midpoint-rule tensor grid: N points per axis, node i at lo + (i + 1/2) h.
struct GridSpec {
  Box box;
  std::vector<int> points;  // per axis

  static GridSpec uniform(Box box, int points_per_axis);
  int dim() const noexcept { return box.dim(); }
  double spacing(int axis) const { return box.extent(axis) / points[static_cast<std::size_t>(axis)]; }
  double weight() const;  // product of spacings
  std::size_t total_nodes() const;
  void node(std::size_t index, double* out) const;
  /// Same box, every axis refined by `factor`.
  GridSpec refined(double factor) const;
};

/// Real amplitude Psi(x, y) = x_factor(x) * y_factor(y) * pair(x, y) with
/// bounding boxes for the x- and y-supports. Empty factors mean 1.
class Amplitude {
 public:
  using PointFn = std::function<double(const double*)>;
  using PairFn = std::function<double(const double*, const double*)>;

  Amplitude(Box x_box, Box y_box, PairFn pair, PointFn x_factor = {}, PointFn y_factor = {});

  /// Psi = 1 on the boxes (no smoothness; for sanity checks).
  static Amplitude constant(Box x_box, Box y_box);
  /// Separable C^infinity bump equal to 1 on the middle half of each box.
  static Amplitude smooth_bump(Box x_box, Box y_box);

  double operator()(const double* x, const double* y) const;
  double x_factor(const double* x) const { return x_factor_ ? x_factor_(x) : 1.0; }
  double y_factor(const double* y) const { return y_factor_ ? y_factor_(y) : 1.0; }
  double pair(const double* x, const double* y) const { return pair_ ? pair_(x, y) : 1.0; }

  const Box& x_box() const noexcept { return x_box_; }
  const Box& y_box() const noexcept { return y_box_; }

  /// Psi(c x, c y), with boxes shrunk by 1/c.
  Amplitude dilated(double c) const;

 private:
  Box x_box_, y_box_;
  PairFn pair_;
  PointFn x_factor_, y_factor_;
};

/// Which gradient the resolution rule h * lambda * sup|grad| <= 2 pi / ppw checks.
enum class Resolution {
  Quadrature,  // sup |grad_y Phi|: the y-sum is an accurate quadrature of the integral
  Norm,        // demodulated gradients in x and y: accurate singular values
  None,
};

struct OperatorOptions {
  Resolution resolution = Resolution::Quadrature;
  double points_per_wavelength = 6.0;
  /// Singular phases need the amplitude to vanish for |x - y| < min_separation.
  double min_separation = 0.25;
  /// Anchor (x_c, y_c) of the demodulation; box centers when unset.
  std::optional<std::pair<std::vector<double>, std::vector<double>>> anchor;
  /// Complex constant multiplying the kernel.
  cplx prefactor = 1.0;
};

/// Largest demodulated / plain phase gradients seen on the amplitude support.
struct GradientBounds {
  double x = 0.0;  // sup over the support of |grad_x| (demodulated in Norm mode)
  double y = 0.0;
};

GradientBounds gradient_bounds(const phase::PhaseSpec& phase, const Amplitude& amp,
                               Resolution mode,
                               const std::optional<std::pair<std::vector<double>, std::vector<double>>>& anchor = {},
                               int samples_per_axis = 0);

/// Abstract linear map C^cols -> C^rows with an adjoint.
class LinearMap {
 public:
  virtual ~LinearMap() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual void apply(std::span<const cplx> in, std::span<cplx> out) const = 0;
  virtual void apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const = 0;
};

/// The discretized operator. Only nodes where the amplitude's point factors
/// are nonzero are kept ("active" nodes).
class OscOperator {
 public:
  OscOperator(phase::PhaseSpec phase, Amplitude amplitude, double lambda, GridSpec x_grid,
              GridSpec y_grid, OperatorOptions options = {});

  const phase::PhaseSpec& phase() const noexcept { return phase_; }
  const Amplitude& amplitude() const noexcept { return amplitude_; }
  double lambda() const noexcept { return lambda_; }
  const GridSpec& x_grid() const noexcept { return x_grid_; }
  const GridSpec& y_grid() const noexcept { return y_grid_; }
  const OperatorOptions& options() const noexcept { return options_; }

  std::size_t rows() const noexcept { return x_index_.size(); }
  std::size_t cols() const noexcept { return y_index_.size(); }
  /// Coordinates of active node i (dim doubles).
  const double* x_node(std::size_t i) const { return &x_coords_[i * static_cast<std::size_t>(x_grid_.dim())]; }
  const double* y_node(std::size_t j) const { return &y_coords_[j * static_cast<std::size_t>(y_grid_.dim())]; }
  /// Flat grid index of active node i.
  std::size_t x_grid_index(std::size_t i) const { return x_index_[i]; }
  std::size_t y_grid_index(std::size_t j) const { return y_index_[j]; }

  /// Kernel entry e^{i lambda Phi} Psi at active nodes (i, j), times the prefactor.
  cplx kernel(std::size_t i, std::size_t j) const;

  /// g(x_i) = sum_j K(x_i, y_j) f(y_j) w_y, matrix-free. f lives on active
  /// y nodes, g on active x nodes.
  void apply(std::span<const cplx> f, std::span<cplx> g) const;

  /// sqrt(w_x) K sqrt(w_y): its spectral norm is the discrete L^2 -> L^2 norm.
  /// Entries are cached (sparse) when at most `cache_entries` nonzeros fit,
  /// otherwise recomputed on every application.
  std::unique_ptr<LinearMap> weighted_map(std::size_t cache_entries) const;

  /// Dense sqrt(w_x) K sqrt(w_y) (tests and small oracles only).
  Eigen::MatrixXcd dense_weighted() const;

  /// Writes the nonzero entries of row i (weighted form) into cols/vals.
  void row_entries(std::size_t i, std::vector<std::uint32_t>& cols, std::vector<cplx>& vals,
                   std::vector<double>& scratch) const;

 private:
  phase::PhaseSpec phase_;
  Amplitude amplitude_;
  double lambda_;
  GridSpec x_grid_, y_grid_;
  OperatorOptions options_;
  std::vector<std::size_t> x_index_, y_index_;
  std::vector<double> x_coords_, y_coords_;
  std::vector<double> x_fac_, y_fac_;
};

/// Resolution-rule grid sizing.
struct GridRule {
  double points_per_wavelength = 6.0;
  double safety = 1.1;       // multiplies the required point count
  int min_points = 8;        // per axis
  std::size_t max_nodes = 400000;  // per side; larger grids are rejected
  double refine = 1.0;       // extra per-axis refinement beyond the rule
};

/// Grids satisfying the rule for (phase, amplitude, lambda).
std::pair<GridSpec, GridSpec> auto_grids(const phase::PhaseSpec& phase, const Amplitude& amp,
                                         double lambda, const GridRule& rule,
                                         Resolution mode = Resolution::Norm,
                                         const std::optional<std::pair<std::vector<double>, std::vector<double>>>& anchor = {});

OscOperator build_operator(const phase::PhaseSpec& phase, const Amplitude& amp, double lambda,
                           const GridSpec& grid, OperatorOptions options = {});
OscOperator build_operator(const phase::PhaseSpec& phase, const Amplitude& amp, double lambda,
                           const GridRule& rule, OperatorOptions options = {});

/// A^H B for maps sharing their output space.
class AdjointProduct final : public LinearMap {
 public:
  AdjointProduct(const LinearMap& a, const LinearMap& b);
  std::size_t rows() const override { return a_.cols(); }
  std::size_t cols() const override { return b_.cols(); }
  void apply(std::span<const cplx> in, std::span<cplx> out) const override;
  void apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const override;

 private:
  const LinearMap& a_;
  const LinearMap& b_;
  mutable std::vector<cplx> tmp_;
};

/// Dense matrix wrapped as a LinearMap.
class DenseMap final : public LinearMap {
 public:
  explicit DenseMap(Eigen::MatrixXcd m) : m_(std::move(m)) {}
  std::size_t rows() const override { return static_cast<std::size_t>(m_.rows()); }
  std::size_t cols() const override { return static_cast<std::size_t>(m_.cols()); }
  void apply(std::span<const cplx> in, std::span<cplx> out) const override;
  void apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const override;

 private:
  Eigen::MatrixXcd m_;
};

enum class NormMethod { Lanczos, Power };

struct NormOptions {
  double tol = 1e-6;
  int max_iter = 500;
  NormMethod method = NormMethod::Lanczos;
  std::uint64_t seed = 12345;
  std::size_t cache_entries = std::size_t{64} << 20;  // ~20 bytes each
};

struct NormEstimate {
  double norm = 0.0;
  int iterations = 0;
  double residual = 0.0;        // relative change of the estimate at exit
  double eigen_residual = 0.0;  // ||A v - theta v|| / theta for A = M^H M
  bool converged = false;
};

/// Top singular value of `map`. A non-converged run is returned with
/// converged = false, never silently.
NormEstimate operator_norm(const LinearMap& map, const NormOptions& opts = {});
NormEstimate operator_norm(const OscOperator& op, const NormOptions& opts = {});

struct SeriesEntry {
  double lambda = 0.0;
  double norm = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::size_t x_nodes = 0;
  std::size_t y_nodes = 0;
};

struct SlopeFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
};

/// Least-squares line through (log x, log y). Needs >= 3 points and at least
/// two distinct abscissae.
SlopeFit fit_slope(std::span<const double> xs, std::span<const double> ys);

struct NormDecaySeries {
  std::vector<SeriesEntry> entries;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;

  /// Throws InvalidArgument unless lambdas increase strictly and norms are positive.
  void validate() const;
};

struct SweepOptions {
  GridRule rule;
  NormOptions norm;
  std::optional<std::pair<std::vector<double>, std::vector<double>>> anchor;
  double min_separation = 0.25;
};

/// Norms over `lambdas` with grids sized per lambda, plus the log-log slope.
/// Any non-converged norm throws ConvergenceError.
NormDecaySeries decay_sweep(const phase::PhaseSpec& phase, const Amplitude& amp,
                            std::span<const double> lambdas, const SweepOptions& opts = {});

}  // namespace foldlab::opnorm
