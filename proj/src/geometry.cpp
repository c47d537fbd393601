#include "foldlab/geometry.hpp"

#include <algorithm>
#include <string>

#include "foldlab/errors.hpp"

namespace foldlab::geometry {

namespace {

void require_same_n(const Vec2n& a, const Vec2n& b) {
  if (a.n() != b.n()) {
    throw InvalidArgument("dimension mismatch: n=" + std::to_string(a.n()) +
                          " vs n=" + std::to_string(b.n()));
  }
}

}  // namespace

Vec2n::Vec2n(Eigen::VectorXd coords) : coords_(std::move(coords)) {
  if (coords_.size() == 0 || coords_.size() % 2 != 0) {
    throw InvalidArgument("Vec2n needs an even, positive number of coordinates, got " +
                          std::to_string(coords_.size()));
  }
}

Vec2n::Vec2n(std::initializer_list<double> coords)
    : Vec2n(Eigen::Map<const Eigen::VectorXd>(coords.begin(),
                                              static_cast<Eigen::Index>(coords.size()))) {}

Vec2n Vec2n::zero(int n) {
  if (n <= 0) throw InvalidArgument("n must be positive");
  return Vec2n(Eigen::VectorXd::Zero(2 * n));
}

Vec2n operator+(const Vec2n& a, const Vec2n& b) {
  require_same_n(a, b);
  return Vec2n(a.coords_ + b.coords_);
}

Vec2n operator-(const Vec2n& a) { return Vec2n(-a.coords_); }

SymplecticJ::SymplecticJ(int n) : n_(n) {
  if (n <= 0) throw InvalidArgument("n must be positive");
}

Eigen::VectorXd SymplecticJ::apply(const Eigen::VectorXd& v) const {
  if (v.size() != 2 * n_) throw InvalidArgument("J applied to a vector of wrong length");
  Eigen::VectorXd out(2 * n_);
  out.head(n_) = v.tail(n_);
  out.tail(n_) = -v.head(n_);
  return out;
}

Eigen::MatrixXd SymplecticJ::dense() const {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n_, 2 * n_);
  j.topRightCorner(n_, n_).setIdentity();
  j.bottomLeftCorner(n_, n_) = -Eigen::MatrixXd::Identity(n_, n_);
  return j;
}

DiagonalB::DiagonalB(std::vector<double> b) : b_(std::move(b)) {
  if (b_.empty()) throw InvalidArgument("DiagonalB needs at least one entry");
}

bool DiagonalB::uniform() const noexcept {
  return std::all_of(b_.begin(), b_.end(), [&](double v) { return v == b_.front(); });
}

Eigen::MatrixXd DiagonalB::dense() const {
  Eigen::VectorXd d(2 * n());
  for (int i = 0; i < 2 * n(); ++i) d[i] = diag(i);
  return d.asDiagonal();
}

double symplectic_form(const double* x, const double* y, int n) noexcept {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i + n] - x[i + n] * y[i];
  return s;
}

double twist(const Vec2n& x, const Vec2n& y) {
  require_same_n(x, y);
  return 2.0 * symplectic_form(x.coords().data(), y.coords().data(), x.n());
}

HeisenbergElement group_mul(const HeisenbergElement& p, const HeisenbergElement& q) {
  require_same_n(p.x, q.x);
  return {p.x + q.x, q.t + p.t - twist(p.x, q.x)};
}

HeisenbergElement group_inv(const HeisenbergElement& p) { return {-p.x, -p.t}; }

}  // namespace foldlab::geometry
