#pragma once

#include <Eigen/Core>
#include <map>
#include <vector>

#include "gmflow/group.hpp"

namespace gmflow {

// Base manifolds. Point encodings: Circle stores the angle as a 1-vector in
// [0, 2pi); Sphere2 a unit 3-vector (norm within 1e-12); Euclidean(d) a real
// d-vector, d in {2, 3}.
struct Manifold {
  enum class Kind { Circle, Sphere2, Euclidean };
  Kind kind = Kind::Euclidean;
  int d = 3;  // Euclidean only

  static Manifold circle() { return {Kind::Circle, 1}; }
  static Manifold sphere2() { return {Kind::Sphere2, 2}; }
  static Manifold euclidean(int d);

  int point_dim() const;  // storage dimension of a point
  bool operator==(const Manifold& o) const { return kind == o.kind && d == o.d; }
};

// Structure group of the trivialized frame bundle: SO(2) for Euclidean(2),
// Sphere2 and Circle (the Circle case is the trivial group realized through
// scalar channels), SO(3) for Euclidean(3).
Group structure_group(const Manifold& M);

void validate_point(const Manifold& M, const Eigen::VectorXd& x);

double geodesic_distance(const Manifold& M, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Spectral kernel data: diffusion time, band limits, and optional per-degree
// coefficient overrides {l: c_l} replacing the default diffusion coefficients
// in the Sphere2 / Circle base expansions (learnable-variant hook; fixed
// coefficients only).
struct KernelSpec {
  double t = 1.0;
  int L_base = 8;
  int L_grp = 4;
  std::map<int, double> overrides;
};

void validate_kernel_spec(const KernelSpec& spec);

// Heat kernel on the base manifold. Euclidean: exact Gaussian
// (4 pi t)^(-d/2) exp(-|x-y|^2 / 4t), L ignored. Sphere2:
// sum_{l<=L} (2l+1)/(4pi) e^{-l(l+1)t} P_l(<x,y>). Circle:
// (1/2pi)(1 + 2 sum_{n<=L} e^{-n^2 t} cos(n dtheta)).
double base_heat_kernel(const Manifold& M, double t, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, int L);

// Same kernel with per-degree coefficient overrides from a KernelSpec
// (Sphere2 / Circle only; Euclidean rejects overrides).
double base_kernel_spec(const Manifold& M, const KernelSpec& spec, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y);

// Heat kernel on the structure group, normalized to unit Haar integral.
// SO(3): sum_{l<=L} (2l+1)^2 e^{-l(l+1)t} chi_l(g); SO(2):
// 1 + 2 sum_{m<=L} e^{-m^2 t} cos(m theta). Class function.
double group_heat_kernel(Group tag, double t, const GroupElement& g, int L);

// Point of the trivialized principal bundle: base point, frame (group
// element relative to the chart's reference frame), and the chart id the
// frame refers to (0 for single-chart manifolds).
struct FiberPoint {
  Eigen::VectorXd x;
  GroupElement frame = GroupElement::identity(Group::SO2);
  int chart = 0;
};

// Product kernel base x group on the trivialized bundle; right-invariant.
// Both fiber points must refer to the same chart (callers align charts
// before evaluating).
double bundle_kernel(const KernelSpec& spec, const Manifold& M, const FiberPoint& p1,
                     const FiberPoint& p2);

// Real orthonormal spherical harmonics, basis order mu = -l..l matching the
// SO(3) irreps: Y_{l,m} ~ cos(m phi), Y_{l,-m} ~ sin(m phi) for m > 0, all
// prefactors positive. Evaluated as polynomials in the Cartesian components,
// stable at the poles.
double spherical_harmonic(int l, int m, const Eigen::Vector3d& u);
Eigen::VectorXd spherical_harmonic_vector(int l, const Eigen::Vector3d& u);

// Legendre P_l by the three-term recurrence; P_l(1) = 1.
double legendre(int l, double u);

// Smallest t (per manifold and band limit) at which the truncated spectral
// kernel is nonnegative on a dense grid; 0 for Euclidean bases. Callers may
// warn below it; evaluation stays legal.
double truncation_positivity_threshold(const Manifold& M, int L);

// Deterministic seeded sampling: Circle uniform angles, Sphere2 uniform via
// normalized Gaussians, Euclidean uniform in [0,1]^d.
std::vector<Eigen::VectorXd> sample_points(const Manifold& M, int n, std::uint64_t seed);

}  // namespace gmflow
