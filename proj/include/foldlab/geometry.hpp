#pragma once

// Real-variable model of the Heisenberg group H^n = R^{2n} x R.

#include <Eigen/Dense>
#include <vector>

namespace foldlab::geometry {

/// A point of R^{2n}. The length is always even and positive.
class Vec2n {
 public:
  explicit Vec2n(Eigen::VectorXd coords);
  Vec2n(std::initializer_list<double> coords);

  static Vec2n zero(int n);

  int n() const noexcept { return static_cast<int>(coords_.size() / 2); }
  const Eigen::VectorXd& coords() const noexcept { return coords_; }
  double operator[](Eigen::Index i) const { return coords_[i]; }

  friend Vec2n operator+(const Vec2n& a, const Vec2n& b);
  friend Vec2n operator-(const Vec2n& a);

 private:
  Eigen::VectorXd coords_;
};

/// (x, t) with x in R^{2n} and central coordinate t.
struct HeisenbergElement {
  Vec2n x;
  double t = 0.0;
};

/// The standard symplectic matrix [[0, I_n], [-I_n, 0]], never stored densely.
class SymplecticJ {
 public:
  explicit SymplecticJ(int n);

  int n() const noexcept { return n_; }
  /// J v: (v_{n..2n-1}, -v_{0..n-1}).
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd dense() const;

 private:
  int n_;
};

/// B = diag(b_1..b_n, b_1..b_n).
class DiagonalB {
 public:
  DiagonalB() = default;
  explicit DiagonalB(std::vector<double> b);
  static DiagonalB zero(int n) { return DiagonalB(std::vector<double>(n, 0.0)); }

  int n() const noexcept { return static_cast<int>(b_.size()); }
  /// Entry i of the 2n-diagonal (i and i+n share a value).
  double diag(int i) const { return b_[static_cast<std::size_t>(i % n())]; }
  const std::vector<double>& values() const noexcept { return b_; }
  /// True when every b_i is equal, i.e. B commutes with all rotations.
  bool uniform() const noexcept;
  Eigen::MatrixXd dense() const;

 private:
  std::vector<double> b_;
};

/// x^t J y for raw coordinate arrays of length 2n.
double symplectic_form(const double* x, const double* y, int n) noexcept;

/// 2 x^t J y.
double twist(const Vec2n& x, const Vec2n& y);

HeisenbergElement group_mul(const HeisenbergElement& p, const HeisenbergElement& q);
HeisenbergElement group_inv(const HeisenbergElement& p);

}  // namespace foldlab::geometry
