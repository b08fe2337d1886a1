#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "gmflow/manifold.hpp"
#include "gmflow/util.hpp"
#include "oracles.hpp"

using namespace gmflow;
using oracles::kPi;

namespace {

struct SphereGrid {
  std::vector<Eigen::Vector3d> pts;
  std::vector<double> w;  // area weights summing to 4 pi
};

// tensor Gauss-Legendre in cos(theta) x uniform in phi; exact for spherical
// polynomials up to the stated degree
SphereGrid sphere_grid(int degree) {
  const int ngl = degree / 2 + 1;
  const int nphi = degree + 1;
  // Gauss-Legendre nodes via Newton iteration on P_n (test-local copy)
  std::vector<double> x(ngl), wg(ngl);
  for (int i = 0; i < (ngl + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (ngl + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < ngl; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = ngl * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::fabs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[ngl - 1 - i] = z;
    wg[i] = wg[ngl - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  SphereGrid g;
  for (int i = 0; i < ngl; ++i) {
    const double ct = x[i];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int k = 0; k < nphi; ++k) {
      const double phi = 2.0 * kPi * k / nphi;
      g.pts.emplace_back(st * std::cos(phi), st * std::sin(phi), ct);
      g.w.push_back(wg[i] * 2.0 * kPi / nphi);
    }
  }
  return g;
}

Eigen::VectorXd as_vec(const Eigen::Vector3d& v) { return Eigen::VectorXd(v); }

}  // namespace

TEST_CASE("geodesic distances have closed forms") {
  const Manifold E3 = Manifold::euclidean(3);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(3), b(3);
  b << 3, 4, 0;
  CHECK(geodesic_distance(E3, a, b) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(geodesic_distance(E3, a, a) == 0.0);

  const Manifold S2 = Manifold::sphere2();
  Eigen::VectorXd np(3), sp(3);
  np << 0, 0, 1;
  sp << 0, 0, -1;
  CHECK(geodesic_distance(S2, np, sp) == doctest::Approx(kPi).epsilon(1e-14));
  Eigen::VectorXd bad(3);
  bad << 0, 0, 1.5;
  CHECK_THROWS_AS(geodesic_distance(S2, np, bad), std::invalid_argument);

  const Manifold C = Manifold::circle();
  Eigen::VectorXd t1(1), t2(1);
  t1 << 0.2;
  t2 << 6.2;
  CHECK(geodesic_distance(C, t1, t2) == doctest::Approx(2.0 * kPi - 6.0).epsilon(1e-12));
}

TEST_CASE("legendre recurrence hits the endpoints") {
  CHECK(legendre(0, 0.77) == 1.0);
  CHECK(legendre(1, 0.3) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(legendre(4, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(legendre(3, -1.0) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("euclidean heat kernel is the exact gaussian") {
  const Manifold E3 = Manifold::euclidean(3);
  const Eigen::VectorXd o = Eigen::VectorXd::Zero(3);
  CHECK(base_heat_kernel(E3, 1.0, o, o, 0) ==
        doctest::Approx(std::pow(4.0 * kPi, -1.5)).epsilon(1e-14));
  Eigen::VectorXd y(3);
  y << 0.3, -0.2, 0.5;
  const double r2 = y.squaredNorm();
  CHECK(base_heat_kernel(E3, 0.7, o, y, 5) ==
        doctest::Approx(std::pow(4.0 * kPi * 0.7, -1.5) * std::exp(-r2 / 2.8)).epsilon(1e-14));
  CHECK_THROWS_AS(base_heat_kernel(E3, -1.0, o, y, 0), std::invalid_argument);
}

TEST_CASE("sphere heat kernel is symmetric normalized and flattens") {
  const Manifold S2 = Manifold::sphere2();
  Rng rng(101);
  const auto pts = sample_points(S2, 6, 11);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i; j < pts.size(); ++j) {
      const double kij = base_heat_kernel(S2, 0.3, pts[i], pts[j], 12);
      const double kji = base_heat_kernel(S2, 0.3, pts[j], pts[i], 12);
      CHECK(std::fabs(kij - kji) <= 1e-14);
    }

  // large t leaves only the constant mode
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    CHECK(base_heat_kernel(S2, 50.0, pts[i], pts[i + 1], 16) ==
          doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-12));

  // unit mass for several diffusion times, grid exact to degree 2L
  const SphereGrid grid = sphere_grid(32);
  for (double t : {0.05, 0.1, 1.0}) {
    double mass = 0.0;
    for (std::size_t q = 0; q < grid.pts.size(); ++q)
      mass += grid.w[q] * base_heat_kernel(S2, t, pts[0], as_vec(grid.pts[q]), 16);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }

  // dominant-mode decay: (k_t - uniform) shrinks by about e^{-2} per unit time
  const double u0 = 1.0 / (4.0 * kPi);
  const double d1 = base_heat_kernel(S2, 1.0, pts[0], pts[1], 16) - u0;
  const double d2 = base_heat_kernel(S2, 2.0, pts[0], pts[1], 16) - u0;
  const double d3 = base_heat_kernel(S2, 3.0, pts[0], pts[1], 16) - u0;
  CHECK(std::fabs(d2 / d1 - std::exp(-2.0)) < 0.15 * std::exp(-2.0));
  CHECK(std::fabs(d3 / d2 - std::exp(-2.0)) < 0.15 * std::exp(-2.0));
}

TEST_CASE("heat kernels obey the semigroup identity") {
  const int L = 16;
  const Manifold S2 = Manifold::sphere2();
  const auto pts = sample_points(S2, 2, 12);
  const SphereGrid grid = sphere_grid(2 * L);
  const double pairs[][2] = {{0.1, 0.1}, {0.05, 0.1}, {0.2, 0.3}};
  for (const auto& st : pairs) {
    double conv = 0.0;
    for (std::size_t q = 0; q < grid.pts.size(); ++q)
      conv += grid.w[q] * base_heat_kernel(S2, st[0], pts[0], as_vec(grid.pts[q]), L) *
              base_heat_kernel(S2, st[1], as_vec(grid.pts[q]), pts[1], L);
    const double direct = base_heat_kernel(S2, st[0] + st[1], pts[0], pts[1], L);
    CHECK(std::fabs(conv - direct) < 1e-8);
  }

  const Manifold C = Manifold::circle();
  Eigen::VectorXd a(1), b(1);
  a << 0.7;
  b << 2.9;
  const int N = 4 * L + 1;
  for (const auto& st : pairs) {
    double conv = 0.0;
    for (int k = 0; k < N; ++k) {
      Eigen::VectorXd z(1);
      z << 2.0 * kPi * k / N;
      conv += (2.0 * kPi / N) * base_heat_kernel(C, st[0], a, z, L) *
              base_heat_kernel(C, st[1], z, b, L);
    }
    CHECK(std::fabs(conv - base_heat_kernel(C, st[0] + st[1], a, b, L)) < 1e-8);
  }
}

TEST_CASE("group heat kernel integrates to one and is a class function") {
  Rng rng(102);
  const double t = 0.3;
  const int L = 6;
  const QuadratureRule r3 = haar_rule(Group::SO3, L);
  double mass = 0.0;
  for (std::size_t q = 0; q < r3.nodes.size(); ++q)
    mass += r3.weights[q] * group_heat_kernel(Group::SO3, t, r3.nodes[q], L);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));

  const QuadratureRule r2 = haar_rule(Group::SO2, L);
  mass = 0.0;
  for (std::size_t q = 0; q < r2.nodes.size(); ++q)
    mass += r2.weights[q] * group_heat_kernel(Group::SO2, t, r2.nodes[q], L);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  for (int i = 0; i < 20; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    const GroupElement h = oracles::random_so3(rng);
    const double kg = group_heat_kernel(Group::SO3, t, g, L);
    CHECK(std::fabs(kg - group_heat_kernel(Group::SO3, t, inverse(g), L)) <= 1e-12);
    const GroupElement conj = compose(compose(h, g), inverse(h));
    CHECK(std::fabs(kg - group_heat_kernel(Group::SO3, t, conj, L)) <= 1e-9);
  }

  for (int i = 0; i < 10; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    CHECK(group_heat_kernel(Group::SO3, 50.0, g, 8) == doctest::Approx(1.0).epsilon(1e-10));
  }

  // SO(2) closed form
  const GroupElement g = GroupElement::so2(0.9);
  double expect = 1.0;
  for (int m = 1; m <= 4; ++m) expect += 2.0 * std::exp(-double(m * m) * t) * std::cos(m * 0.9);
  CHECK(group_heat_kernel(Group::SO2, t, g, 4) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("bundle kernel is the product and is right-invariant") {
  const Manifold E3 = Manifold::euclidean(3);
  KernelSpec spec;
  spec.t = 1.0;
  spec.L_base = 8;
  spec.L_grp = 6;

  FiberPoint p1{Eigen::VectorXd::Zero(3), GroupElement::identity(Group::SO3), 0};
  FiberPoint p2 = p1;
  const double expect = std::pow(4.0 * kPi, -1.5) *
                        group_heat_kernel(Group::SO3, 1.0, GroupElement::identity(Group::SO3), 6);
  CHECK(bundle_kernel(spec, E3, p1, p2) == doctest::Approx(expect).epsilon(1e-13));

  Rng rng(103);
  for (int i = 0; i < 50; ++i) {
    FiberPoint a{Eigen::VectorXd::Random(3), oracles::random_so3(rng), 0};
    FiberPoint b{Eigen::VectorXd::Random(3), oracles::random_so3(rng), 0};
    const GroupElement g = oracles::random_so3(rng);
    FiberPoint ag{a.x, compose(a.frame, g), 0};
    FiberPoint bg{b.x, compose(b.frame, g), 0};
    const double k0 = bundle_kernel(spec, E3, a, b);
    const double k1 = bundle_kernel(spec, E3, ag, bg);
    CHECK(std::fabs(k0 - k1) <= 1e-12 * std::max(1.0, std::fabs(k0)));
  }

  // both factors flatten at large t
  KernelSpec flat = spec;
  flat.t = 60.0;
  const Manifold S2 = Manifold::sphere2();
  const auto pts = sample_points(S2, 4, 13);
  const double ref = bundle_kernel(
      flat, S2, FiberPoint{pts[0], GroupElement::so2(0.3), 0},
      FiberPoint{pts[1], GroupElement::so2(2.2), 0});
  const double other = bundle_kernel(
      flat, S2, FiberPoint{pts[2], GroupElement::so2(4.0), 0},
      FiberPoint{pts[3], GroupElement::so2(1.0), 0});
  CHECK(std::fabs(ref - other) <= 1e-12);
  CHECK(ref == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-10));

  FiberPoint wrong_chart{pts[0], GroupElement::so2(0.1), 1};
  CHECK_THROWS_AS(bundle_kernel(flat, S2, wrong_chart, FiberPoint{pts[1], GroupElement::so2(0.0), 0}),
                  std::invalid_argument);
  KernelSpec ov = spec;
  ov.overrides[0] = 0.5;
  CHECK_THROWS_AS(bundle_kernel(ov, E3, p1, p2), std::invalid_argument);
}

TEST_CASE("coefficient overrides replace spectral weights") {
  const Manifold S2 = Manifold::sphere2();
  KernelSpec spec;
  spec.t = 0.4;
  spec.L_base = 3;
  spec.overrides[1] = 0.25;
  const auto pts = sample_points(S2, 2, 14);
  const double c = pts[0].dot(pts[1]);
  double expect = 0.0;
  for (int l = 0; l <= 3; ++l) {
    const double cl = (l == 1) ? 0.25 : (2.0 * l + 1.0) / (4.0 * kPi) * std::exp(-l * (l + 1.0) * 0.4);
    expect += cl * oracles::legendre_poly(l, c);
  }
  CHECK(base_kernel_spec(S2, spec, pts[0], pts[1]) == doctest::Approx(expect).epsilon(1e-13));

  KernelSpec bad = spec;
  bad.overrides[2] = -0.1;
  CHECK_THROWS_AS(base_kernel_spec(S2, bad, pts[0], pts[1]), std::invalid_argument);
}

TEST_CASE("spherical harmonics match the recurrence oracle") {
  Rng rng(104);
  CHECK(spherical_harmonic(0, 0, Eigen::Vector3d(0, 0, 1)) ==
        doctest::Approx(1.0 / std::sqrt(4.0 * kPi)).epsilon(1e-14));
  CHECK(spherical_harmonic(1, 0, Eigen::Vector3d(0, 0, 1)) ==
        doctest::Approx(std::sqrt(3.0 / (4.0 * kPi))).epsilon(1e-14));
  CHECK_THROWS_AS(spherical_harmonic(1, 2, Eigen::Vector3d(0, 0, 1)), std::invalid_argument);

  for (int i = 0; i < 30; ++i) {
    Eigen::Vector3d u(rng.normal(), rng.normal(), rng.normal());
    u.normalize();
    for (int l = 0; l <= 6; ++l) {
      const Eigen::VectorXd mine = spherical_harmonic_vector(l, u);
      const Eigen::VectorXd ref = oracles::real_sph_oracle(l, u);
      CHECK((mine - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  // poles: only m = 0 survives, exactly
  for (double s : {1.0, -1.0}) {
    const Eigen::Vector3d pole(0, 0, s);
    for (int l = 1; l <= 6; ++l) {
      const Eigen::VectorXd Y = spherical_harmonic_vector(l, pole);
      for (int m = 1; m <= l; ++m) {
        CHECK(Y(l + m) == 0.0);
        CHECK(Y(l - m) == 0.0);
      }
      CHECK(std::fabs(Y(l)) == doctest::Approx(std::sqrt((2.0 * l + 1) / (4.0 * kPi))).epsilon(1e-13));
    }
  }
}

TEST_CASE("spherical harmonics satisfy the addition theorem") {
  Rng rng(105);
  for (int i = 0; i < 10; ++i) {
    Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector3d y(rng.normal(), rng.normal(), rng.normal());
    x.normalize();
    y.normalize();
    for (int l = 0; l <= 8; ++l) {
      const Eigen::VectorXd Yx = spherical_harmonic_vector(l, x);
      const Eigen::VectorXd Yy = spherical_harmonic_vector(l, y);
      const double lhs = Yx.dot(Yy);
      const double rhs = (2.0 * l + 1.0) / (4.0 * kPi) * oracles::legendre_poly(l, x.dot(y));
      CHECK(std::fabs(lhs - rhs) < 1e-10);
    }
  }
}

TEST_CASE("spherical harmonics are orthonormal on the quadrature grid") {
  const SphereGrid grid = sphere_grid(10);
  std::vector<int> offs;
  int dim = 0;
  for (int l = 0; l <= 4; ++l) {
    offs.push_back(dim);
    dim += 2 * l + 1;
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t q = 0; q < grid.pts.size(); ++q) {
    Eigen::VectorXd all(dim);
    for (int l = 0; l <= 4; ++l) all.segment(offs[l], 2 * l + 1) = spherical_harmonic_vector(l, grid.pts[q]);
    G += grid.w[q] * all * all.transpose();
  }
  CHECK((G - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rotating the argument applies the irrep matrix") {
  Rng rng(106);
  for (int i = 0; i < 20; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    Eigen::Vector3d u(rng.normal(), rng.normal(), rng.normal());
    u.normalize();
    for (int l = 0; l <= 4; ++l) {
      const Eigen::VectorXd lhs = spherical_harmonic_vector(l, g.matrix() * u);
      const Eigen::VectorXd rhs = irrep_matrix(IrrepLabel::so3(l), g) * spherical_harmonic_vector(l, u);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("seeded sampling is deterministic and well distributed") {
  const Manifold S2 = Manifold::sphere2();
  const auto a = sample_points(S2, 100, 42);
  const auto b = sample_points(S2, 100, 42);
  for (int i = 0; i < 100; ++i) CHECK((a[i] - b[i]).norm() == 0.0);
  for (const auto& p : a) CHECK(std::fabs(p.norm() - 1.0) <= 1e-12);

  const auto e = sample_points(Manifold::euclidean(2), 50, 7);
  for (const auto& p : e) {
    CHECK(p.size() == 2);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.maxCoeff() < 1.0);
  }

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  const auto big = sample_points(S2, 10000, 2024);
  for (const auto& p : big) mean += Eigen::Vector3d(p);
  mean /= 10000.0;
  CHECK(mean.norm() <= 0.05);
  // frozen regression value for this seed (recorded from the first run)
  CHECK(mean.norm() == doctest::Approx(0.0087893713585521539).epsilon(1e-10));
}

TEST_CASE("positivity threshold brackets the sign change") {
  const Manifold S2 = Manifold::sphere2();
  const double t0 = truncation_positivity_threshold(S2, 12);
  CHECK(t0 > 0.0);
  KernelSpec lo{0.5 * t0, 12, 0, {}};
  KernelSpec hi{1.02 * t0, 12, 0, {}};
  double mn_lo = 1e300, mn_hi = 1e300;
  for (int i = 0; i <= 2000; ++i) {
    const double c = -1.0 + i / 1000.0;
    mn_lo = std::min(mn_lo, base_kernel_spec(S2, lo, Eigen::VectorXd(Eigen::Vector3d(0, 0, 1)),
                                             Eigen::VectorXd(Eigen::Vector3d(std::sqrt(1 - c * c), 0, c))));
    mn_hi = std::min(mn_hi, base_kernel_spec(S2, hi, Eigen::VectorXd(Eigen::Vector3d(0, 0, 1)),
                                             Eigen::VectorXd(Eigen::Vector3d(std::sqrt(1 - c * c), 0, c))));
  }
  CHECK(mn_lo < 0.0);
  CHECK(mn_hi >= -1e-12);
  CHECK(truncation_positivity_threshold(Manifold::euclidean(3), 5) == 0.0);
}
