#pragma once

// Independent reference implementations used to derive expected values in
// tests. These deliberately avoid the code paths of the library: matrix
// exponentials use plain scaling + Taylor summation, special functions use
// textbook recurrences, and group integrals can be re-run at doubled
// quadrature order.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gmflow/group.hpp"
#include "gmflow/util.hpp"

namespace oracles {

inline constexpr double kPi = 3.14159265358979323846;

// exp(A) by scaling-and-squaring with a raw Taylor series; independent of
// Eigen's Pade implementation.
inline Eigen::MatrixXd taylor_exp(const Eigen::MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  int s = 0;
  double nrm = A.cwiseAbs().rowwise().sum().maxCoeff();
  while (nrm > 0.5) {
    nrm /= 2.0;
    ++s;
  }
  const Eigen::MatrixXd B = A / std::pow(2.0, s);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 40; ++k) {
    term = (term * B) / double(k);
    sum += term;
    if (term.norm() < 1e-300) break;
  }
  for (int k = 0; k < s; ++k) sum = sum * sum;
  return sum;
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

// Centered difference of s -> irrep(exp(s X_axis)) at s = 0.
inline Eigen::MatrixXd fd_generator(const gmflow::IrrepLabel& lab, int axis, double h) {
  const Eigen::MatrixXd Dp = gmflow::irrep_matrix(lab, gmflow::exp_basis(lab.tag, axis, h));
  const Eigen::MatrixXd Dm = gmflow::irrep_matrix(lab, gmflow::exp_basis(lab.tag, axis, -h));
  return (Dp - Dm) / (2.0 * h);
}

inline gmflow::GroupElement random_so3(gmflow::Rng& rng) {
  const double alpha = rng.uniform(0.0, 2.0 * kPi);
  const double beta = std::acos(rng.uniform(-1.0, 1.0));
  const double gamma = rng.uniform(0.0, 2.0 * kPi);
  return gmflow::GroupElement::so3_euler_zyz(alpha, beta, gamma);
}

inline gmflow::GroupElement random_element(gmflow::Group tag, gmflow::Rng& rng) {
  if (tag == gmflow::Group::SO2) return gmflow::GroupElement::so2(rng.uniform(0.0, 2.0 * kPi));
  return random_so3(rng);
}

// Legendre P_l by the three-term recurrence.
inline double legendre_poly(int l, double x) {
  double p0 = 1.0, p1 = x;
  if (l == 0) return p0;
  if (l == 1) return p1;
  for (int k = 2; k <= l; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Orthonormalized associated Legendre Pbar_l^m(x), m >= 0, including the
// sqrt((2l+1)/(4pi) (l-m)!/(l+m)!) factor and no Condon-Shortley sign.
// Sectoral seed then upward recurrence in l.
inline double assoc_legendre_norm(int l, int m, double x) {
  const double somx2 = std::sqrt(std::max(0.0, 1.0 - x * x));
  double pmm = std::sqrt(1.0 / (4.0 * kPi));
  for (int k = 1; k <= m; ++k) pmm *= somx2 * std::sqrt((2.0 * k + 1.0) / (2.0 * k));
  if (l == m) return pmm;
  double pprev = pmm;
  double pcur = x * std::sqrt(2.0 * m + 3.0) * pmm;
  for (int ll = m + 2; ll <= l; ++ll) {
    const double a = std::sqrt((4.0 * ll * ll - 1.0) / double(ll * ll - m * m));
    const double b = std::sqrt(double((ll - 1) * (ll - 1) - m * m) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
    const double pnext = a * (x * pcur - b * pprev);
    pprev = pcur;
    pcur = pnext;
  }
  return pcur;
}

// Real spherical harmonic oracle on the unit vector u, basis order
// mu = -l..l with Ytil_m ~ cos(m phi), Ytil_{-m} ~ sin(m phi), positive
// prefactors.
inline Eigen::VectorXd real_sph_oracle(int l, const Eigen::Vector3d& u) {
  const double ct = std::clamp(u.z(), -1.0, 1.0);
  const double phi = std::atan2(u.y(), u.x());
  Eigen::VectorXd Y(2 * l + 1);
  Y(l) = assoc_legendre_norm(l, 0, ct);
  for (int m = 1; m <= l; ++m) {
    const double p = assoc_legendre_norm(l, m, ct) * std::sqrt(2.0);
    Y(l + m) = p * std::cos(m * phi);
    Y(l - m) = p * std::sin(m * phi);
  }
  return Y;
}

}  // namespace oracles
