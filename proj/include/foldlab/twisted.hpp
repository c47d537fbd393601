#pragma once

// Exact L^2 norms of twisted convolutions with radial kernels on R^{2n}:
//   T f(x) = int k(|x-y|) e^{i sigma x^t J y} f(y) dy.
// For sigma != 0 the Weyl transform diagonalizes T in the special Hermite
// basis, with multipliers
//   R_k = k!(n-1)!/(k+n-1)! * int k(|w|) L_k^{n-1}(|sigma||w|^2) e^{-|sigma||w|^2/2} dw,
// and ||T|| = sup_k |R_k|. For sigma = 0, T is a convolution and
// ||T|| = sup_xi |k^(xi)|.

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

namespace foldlab::opnorm {

/// k(r) = prefactor * amplitude(r) * e^{i lambda phase(r)}, supported in [r_lo, r_hi].
struct RadialKernel {
  std::function<double(double)> amplitude;
  std::function<double(double)> phase;
  double lambda = 1.0;
  double r_lo = 0.0;
  double r_hi = 1.0;
  int n = 1;  // the kernel lives on R^{2n}
  std::complex<double> prefactor = 1.0;

  void validate() const;
  std::complex<double> operator()(double r) const;
  /// Largest local frequency lambda |phase'(r)| on the support (sampled).
  double max_frequency() const;
};

struct SpectralOptions {
  double radians_per_panel = 4.0;  // 16-point Gauss-Legendre panels
  int min_panels = 32;
  double mode_margin = 1.5;        // multiplies the stationary-phase mode estimate
  std::size_t max_modes = 2000000;
};

struct SpectralNorm {
  double norm = 0.0;
  double argmax = 0.0;  // Laguerre index k, or the frequency |xi| when sigma = 0
  std::size_t modes = 0;  // multipliers / frequencies examined
  std::size_t nodes = 0;  // radial quadrature nodes
};

/// Laguerre multipliers R_0 .. R_{count-1}; sigma != 0.
std::vector<std::complex<double>> laguerre_multipliers(const RadialKernel& k, double sigma,
                                                       std::size_t count,
                                                       const SpectralOptions& opts = {});

/// Radial Fourier transform k^(xi) on R^{2n} at |xi| = xi.
std::complex<double> radial_fourier(const RadialKernel& k, double xi,
                                    const SpectralOptions& opts = {});

/// Number of multipliers needed to capture the supremum.
std::size_t mode_count(const RadialKernel& k, double sigma, const SpectralOptions& opts = {});

/// ||T|| for the twisted convolution above.
SpectralNorm twisted_radial_norm(const RadialKernel& k, double sigma,
                                 const SpectralOptions& opts = {});

/// ||T_a^* T_b|| for two radial twisted convolutions with the same sigma
/// (they commute and share eigenspaces): sup_k |R_k(a)| |R_k(b)|.
SpectralNorm twisted_radial_product_norm(const RadialKernel& a, const RadialKernel& b,
                                         double sigma, const SpectralOptions& opts = {});

}  // namespace foldlab::opnorm
