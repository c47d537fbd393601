#pragma once

// Dyadic, radial-patch and angular decomposition of the strongly singular
// Heisenberg Radon transform, the rescaled pieces T_{j,tau}, and the norm
// sweeps built on them (key estimate, off-band regimes, almost orthogonality,
// Cotlar-Stein assembly).
//
// After the Fourier transform in the central variable every piece is a
// twisted convolution on R^{2n}: T f(x) = int k(x-y) e^{i sigma x^t J y} f(y) dy.
// Summed over cones its kernel is radial whenever B is a multiple of I, and
// the norms below are then computed exactly in the Laguerre basis
// (foldlab/twisted.hpp). The grid route (build_Tj_tau) is kept for
// cross-checks and for non-radial amplitudes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "foldlab/opnorm.hpp"
#include "foldlab/phase.hpp"
#include "foldlab/twisted.hpp"

namespace foldlab::decomp {

/// zeta, theta = zeta(t) - zeta(2t), radial patches chi_h and angular cones.
class CutoffFamily {
 public:
  /// 0 < delta <= 1/8; throws InvalidArgument when the patches cannot be
  /// fitted with plateau delta and support 2 delta.
  explicit CutoffFamily(double delta = 0.125);

  double delta() const noexcept { return delta_; }

  double zeta(double t) const;
  double theta(double t) const;

  int patches() const noexcept { return patches_; }
  double center(int h) const;
  /// 1 on [a_h - delta, a_h + delta], 0 outside [a_h - 2 delta, a_h + 2 delta].
  double chi(int h, double t) const;

  int cones() const noexcept { return cones_; }
  double cone_center(int c) const;
  /// Angular cutoff of aperture ~delta around cone_center(c), as a function of the angle.
  double chi_cone(int c, double angle) const;
  /// Same, homogeneous of degree 0 in z in R^{2n}: the angle of (z_1, z_{n+1}).
  double chi_cone(int c, const double* z, int n) const;

 private:
  double delta_;
  int patches_;
  double spacing_, plateau_, ramp_;
  int cones_;
  double cone_spacing_, cone_plateau_, cone_ramp_;
};

CutoffFamily build_cutoffs(double delta = 0.125);

/// Worst absolute deviation of each partition identity on dense samples.
struct PartitionCheck {
  double dyadic = 0.0;       // sum_{j>=0} theta(2^j t) = 1 on (0, 1/2]
  double patches = 0.0;      // sum_h chi_h = 1 on [1/4, 1]
  double resummation = 0.0;  // sum_h chi_h theta = theta
  double cones = 0.0;        // sum_c chi_cone = 1 on the circle
  double max() const noexcept;
};

PartitionCheck check_partitions(const CutoffFamily& fam, int samples = 4000);

/// Partial dyadic sum sum_{j=lo..hi} theta(2^j t).
double dyadic_sum(const CutoffFamily& fam, double t, int lo, int hi);

/// Which phi the Heisenberg phase carries.
enum class Condition { I, II };

struct PhaseCondition {
  Condition cond = Condition::II;
  double beta = 1.0;
  int n = 1;
  double kappa = 3.0;        // (i): phi = c |z|^kappa
  double kappa_coeff = 1.0;
  std::vector<double> b;     // (ii): phi = z^t B z + rho |z|^3, B = diag(b, b)
  double cubic = 0.0;

  void validate() const;
  /// phi depends on |z| only (always for (i); B uniform for (ii)).
  bool radial() const;
  /// Unrescaled phi as a function of r = |z| (radial() only).
  double phi(double r) const;
  /// 2^{2j} phi(2^{-j} r).
  double phi_rescaled(int j, double r) const;
  /// Phase of T_{j,tau} divided by 2^{j beta}:
  ///   |x-y|^-beta + s (2 x^t J y - 2^{2j} phi(2^{-j}(x-y))),  s = 2^{-j(beta+2)} tau.
  phase::PhaseSpec dyadic_phase(int j, double s) const;
};

/// Mixed Hessian of -2^{2j} phi(2^{-j}(x-y)) at (x, y).
Eigen::MatrixXd phi_mixed_hessian(const PhaseCondition& c, int j, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y);

/// Coupling s = 2^{-j(beta+2)} tau and its inverse.
double coupling(int j, double beta, double tau);
double tau_for(int j, double beta, double s);

struct AmplitudeSpec {
  double alpha = 0.0;
  double beta = 1.0;
  int n = 1;
  int j = 2;
  int h = -1;     // radial patch; -1 sums all patches (the whole annulus)
  int cone = -1;  // angular cone; -1 sums all cones
  double localizer_radius = 4.0;  // a(x, y) carries zeta(|x| / R) zeta(|y| / R)

  void validate(const CutoffFamily& fam) const;
};

/// Radial profile of the rescaled amplitude: chi_h(r) theta(r) r^{-2n-alpha}
/// (theta(r) r^{-2n-alpha} when h = -1).
double radial_profile(const AmplitudeSpec& a, const CutoffFamily& fam, double r);

/// b(x, y) = 2^{-j(2n+alpha)} a_j(2^{-j} x, 2^{-j} y), points in R^{2n}.
double rescaled_amplitude(const AmplitudeSpec& a, const CutoffFamily& fam, const double* x,
                          const double* y);

/// Sampled C^0..C^order seminorms of b: max |d^k/dt^k b((x,y) + t v)| over
/// points in |x| <= window and random unit directions v, by central differences.
std::vector<double> sampled_seminorms(const AmplitudeSpec& a, const CutoffFamily& fam,
                                      int order = 4, int samples = 400, double window = 2.0,
                                      std::uint64_t seed = 7);

/// A dyadic piece realized on grids.
struct DyadicOperator {
  int j = 0;
  double tau = 0.0;
  double s = 0.0;       // 2^{-j(beta+2)} tau
  double lambda = 0.0;  // 2^{j beta}
  phase::PhaseSpec phase;
  opnorm::OscOperator op;
};

/// T_{j,tau} on grids over x in [-half_width, half_width]^{2n} (smoothly
/// windowed) and the y box reaching 1 + 2 delta further out. Grids follow
/// `rule` for the effective frequency; a violation throws ResolutionError.
DyadicOperator build_Tj_tau(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                            const CutoffFamily& fam, double half_width,
                            const opnorm::GridRule& rule = {},
                            opnorm::Resolution mode = opnorm::Resolution::Norm);
/// Same with explicit points per axis.
DyadicOperator build_Tj_tau(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                            const CutoffFamily& fam, double half_width, int points_per_axis,
                            opnorm::Resolution mode = opnorm::Resolution::Norm);

/// A cone-summed piece as a radial twisted convolution.
struct TwistedPiece {
  opnorm::RadialKernel kernel;
  double sigma = 0.0;
};

/// T_{j,tau} in rescaled variables: lambda = 2^{j beta}, prefactor 2^{j alpha},
/// sigma = 2 lambda s. Needs a.cone == -1 and c.radial().
TwistedPiece rescaled_piece(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                            const CutoffFamily& fam);
/// The unrescaled piece: kernel theta(2^j r) r^{-2n-alpha} e^{i(r^-beta - tau phi(r))}, sigma = 2 tau.
/// Unitarily equivalent to rescaled_piece; pieces with different j share sigma.
TwistedPiece unrescaled_piece(const AmplitudeSpec& a, const PhaseCondition& c, double tau,
                              const CutoffFamily& fam);

double piece_norm(const TwistedPiece& p, const opnorm::SpectralOptions& o = {});

/// epsilon, interior log-spaced points, 1/epsilon.
std::vector<double> band_samples(double epsilon, int interior);

struct KeyEstimateOptions {
  std::vector<int> js{2, 3, 4, 5, 6};
  double epsilon = 0.25;
  int interior = 3;         // log-spaced couplings strictly inside the band
  bool patch_sup = true;    // sup over radial patches, else the whole annulus
  opnorm::SpectralOptions spectral;
};

struct KeyRow {
  int j = 0;
  int h = -1;
  double s = 0.0;
  double tau = 0.0;
  double norm = 0.0;
};

struct KeyEstimateResult {
  std::vector<KeyRow> rows;
  std::vector<int> js;
  std::vector<double> sup;   // per j
  std::vector<double> argmax_s;
  double slope = 0.0;        // of log2 sup vs j
  double slope_stderr = 0.0;
};

KeyEstimateResult key_estimate_sweep(const AmplitudeSpec& a, const PhaseCondition& c,
                                     const CutoffFamily& fam, const KeyEstimateOptions& o = {});

struct RegimeRow {
  double s = 0.0;
  double tau = 0.0;
  double norm = 0.0;
  double bound = 0.0;  // 2^{j alpha} min{2^{-j n beta}, 2^{2jn} |tau|^{-n}}
  double ratio = 0.0;
  bool flagged = false;  // norm > A bound
};

struct RegimeResult {
  int j = 0;
  std::vector<RegimeRow> rows;
  double A = 0.0;  // max ratio
  int flagged = 0;
};

/// Off-band table. Any s inside (epsilon, 1/epsilon) throws InvalidArgument.
RegimeResult regime_check(const AmplitudeSpec& a, const PhaseCondition& c, const CutoffFamily& fam,
                          const std::vector<double>& couplings, double epsilon = 0.25,
                          const opnorm::SpectralOptions& o = {});

struct OrthoOptions {
  int j = 1;
  std::vector<int> jprimes{1, 2, 3, 4, 5};
  double epsilon = 0.25;
  int interior = 3;
  opnorm::SpectralOptions spectral;
};

struct OrthoRow {
  int j = 0, jprime = 0;
  double s = 0.0;  // coupling in the j' band
  double tau = 0.0;
  double composed = 0.0;  // ||T_j^* T_j'||
  double norm_j = 0.0;
  double norm_jprime = 0.0;
  bool submultiplicative = true;
};

struct OrthoResult {
  std::vector<OrthoRow> rows;
  std::map<int, double> gains;  // |j - j'| -> sup over tau of the composed norm
  double slope = 0.0;           // of log2 gain vs |j - j'|
  double slope_stderr = 0.0;
  bool submultiplicative = true;
};

/// Needs j' >= j; tau ranges over the j' critical band.
OrthoResult ortho_sweep(const AmplitudeSpec& a, const PhaseCondition& c, const CutoffFamily& fam,
                        const OrthoOptions& o = {});

struct CotlarBound {
  double partial = 0.0;  // sum_k gain_k^{1/2} over the supplied k
  double tail = 0.0;     // geometric tail from the fitted rate
  double rate = 0.0;     // fitted log2 decay of gain^{1/2} per unit k
  double total = 0.0;
};

/// Cotlar-Stein sum sum_k sup_j ||T_j^* T_{j+k}||^{1/2}. Needs >= 2 gains;
/// throws InvalidArgument when the fitted rate does not decay.
CotlarBound cotlar_assemble(const std::map<int, double>& gains);

}  // namespace foldlab::decomp
