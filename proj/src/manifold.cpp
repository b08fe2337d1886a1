#include "gmflow/manifold.hpp"

#include <cmath>
#include <stdexcept>

#include "gmflow/util.hpp"

namespace gmflow {

namespace {
constexpr double kPi = 3.14159265358979323846;

double wrap_2pi(double a) {
  double r = std::fmod(a, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  if (r >= 2.0 * kPi) r = 0.0;
  return r;
}
}  // namespace

Manifold Manifold::euclidean(int d) {
  if (d != 2 && d != 3) throw std::invalid_argument("Euclidean dimension must be 2 or 3");
  return {Kind::Euclidean, d};
}

int Manifold::point_dim() const {
  switch (kind) {
    case Kind::Circle: return 1;
    case Kind::Sphere2: return 3;
    case Kind::Euclidean: return d;
  }
  return 0;
}

Group structure_group(const Manifold& M) {
  if (M.kind == Manifold::Kind::Euclidean && M.d == 3) return Group::SO3;
  return Group::SO2;
}

void validate_point(const Manifold& M, const Eigen::VectorXd& x) {
  if (x.size() != M.point_dim()) throw std::invalid_argument("point has wrong dimension for manifold");
  if (!x.allFinite()) throw std::invalid_argument("point has non-finite coordinates");
  if (M.kind == Manifold::Kind::Sphere2 && std::fabs(x.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("sphere point is not unit length");
}

double geodesic_distance(const Manifold& M, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  validate_point(M, x);
  validate_point(M, y);
  switch (M.kind) {
    case Manifold::Kind::Euclidean:
      return (x - y).norm();
    case Manifold::Kind::Sphere2:
      return std::acos(std::clamp(x.dot(y), -1.0, 1.0));
    case Manifold::Kind::Circle: {
      const double d = std::fabs(wrap_2pi(x[0] - y[0]));
      return std::min(d, 2.0 * kPi - d);
    }
  }
  return 0.0;
}

void validate_kernel_spec(const KernelSpec& spec) {
  if (!(spec.t > 0.0)) throw std::invalid_argument("kernel spec requires t > 0");
  if (spec.L_base < 0 || spec.L_grp < 0) throw std::invalid_argument("band limits must be >= 0");
  for (const auto& [l, c] : spec.overrides) {
    if (l < 0) throw std::invalid_argument("coefficient override degree must be >= 0");
    if (c < 0.0) throw std::invalid_argument("coefficient overrides must be non-negative");
  }
}

double legendre(int l, double u) {
  if (l < 0) throw std::invalid_argument("legendre degree must be >= 0");
  if (std::fabs(u) > 1.0 + 1e-12) throw std::invalid_argument("legendre argument outside [-1,1]");
  u = std::clamp(u, -1.0, 1.0);
  double p0 = 1.0, p1 = u;
  if (l == 0) return p0;
  if (l == 1) return p1;
  for (int k = 2; k <= l; ++k) {
    const double p2 = ((2.0 * k - 1.0) * u * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

namespace {

// default Sphere2 expansion coefficient of P_l(<x,y>)
double sphere_coeff(const KernelSpec& spec, int l) {
  auto it = spec.overrides.find(l);
  if (it != spec.overrides.end()) return it->second;
  return (2.0 * l + 1.0) / (4.0 * kPi) * std::exp(-double(l) * (l + 1.0) * spec.t);
}

// default Circle expansion coefficient of cos(n dtheta)
double circle_coeff(const KernelSpec& spec, int n) {
  auto it = spec.overrides.find(n);
  if (it != spec.overrides.end()) return it->second;
  if (n == 0) return 1.0 / (2.0 * kPi);
  return std::exp(-double(n) * n * spec.t) / kPi;
}

double sphere_kernel(const KernelSpec& spec, double cosg) {
  double acc = 0.0;
  double p0 = 1.0, p1 = cosg;
  for (int l = 0; l <= spec.L_base; ++l) {
    double pl;
    if (l == 0) pl = p0;
    else if (l == 1) pl = p1;
    else {
      pl = ((2.0 * l - 1.0) * cosg * p1 - (l - 1.0) * p0) / l;
      p0 = p1;
      p1 = pl;
    }
    acc += sphere_coeff(spec, l) * pl;
  }
  return acc;
}

double circle_kernel(const KernelSpec& spec, double dtheta) {
  double acc = circle_coeff(spec, 0);
  for (int n = 1; n <= spec.L_base; ++n) acc += circle_coeff(spec, n) * std::cos(n * dtheta);
  return acc;
}

}  // namespace

double base_heat_kernel(const Manifold& M, double t, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, int L) {
  if (!(t > 0.0)) throw std::invalid_argument("heat kernel requires t > 0");
  if (L < 0) throw std::invalid_argument("band limit must be >= 0");
  validate_point(M, x);
  validate_point(M, y);
  KernelSpec spec;
  spec.t = t;
  spec.L_base = L;
  switch (M.kind) {
    case Manifold::Kind::Euclidean: {
      const double r2 = (x - y).squaredNorm();
      return std::pow(4.0 * kPi * t, -0.5 * M.d) * std::exp(-r2 / (4.0 * t));
    }
    case Manifold::Kind::Sphere2:
      return sphere_kernel(spec, std::clamp(x.dot(y), -1.0, 1.0));
    case Manifold::Kind::Circle:
      return circle_kernel(spec, x[0] - y[0]);
  }
  return 0.0;
}

double base_kernel_spec(const Manifold& M, const KernelSpec& spec, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y) {
  validate_kernel_spec(spec);
  validate_point(M, x);
  validate_point(M, y);
  switch (M.kind) {
    case Manifold::Kind::Euclidean: {
      if (!spec.overrides.empty())
        throw std::invalid_argument("coefficient overrides are not supported on Euclidean bases");
      const double r2 = (x - y).squaredNorm();
      return std::pow(4.0 * kPi * spec.t, -0.5 * M.d) * std::exp(-r2 / (4.0 * spec.t));
    }
    case Manifold::Kind::Sphere2:
      return sphere_kernel(spec, std::clamp(x.dot(y), -1.0, 1.0));
    case Manifold::Kind::Circle:
      return circle_kernel(spec, x[0] - y[0]);
  }
  return 0.0;
}

double group_heat_kernel(Group tag, double t, const GroupElement& g, int L) {
  if (!(t > 0.0)) throw std::invalid_argument("heat kernel requires t > 0");
  if (L < 0) throw std::invalid_argument("band limit must be >= 0");
  if (g.group() != tag) throw std::invalid_argument("group tag does not match element");
  if (tag == Group::SO2) {
    const double th = g.angle();
    double acc = 1.0;
    for (int m = 1; m <= L; ++m) acc += 2.0 * std::exp(-double(m) * m * t) * std::cos(m * th);
    return acc;
  }
  double acc = 0.0;
  for (int l = 0; l <= L; ++l) {
    const double dl = 2.0 * l + 1.0;
    acc += dl * dl * std::exp(-double(l) * (l + 1.0) * t) * so3_character(l, g);
  }
  return acc;
}

double bundle_kernel(const KernelSpec& spec, const Manifold& M, const FiberPoint& p1,
                     const FiberPoint& p2) {
  validate_kernel_spec(spec);
  if (p1.frame.group() != p2.frame.group())
    throw std::invalid_argument("bundle_kernel: fiber points carry different structure groups");
  if (p1.frame.group() != structure_group(M))
    throw std::invalid_argument("bundle_kernel: frames do not match the manifold's structure group");
  if (p1.chart != p2.chart)
    throw std::invalid_argument("bundle_kernel: fiber points must refer to the same chart");
  const double kb = base_kernel_spec(M, spec, p1.x, p2.x);
  const GroupElement rel = compose(inverse(p1.frame), p2.frame);
  return kb * group_heat_kernel(p1.frame.group(), spec.t, rel, spec.L_grp);
}

// ---------------------------------------------------------------------------
// Spherical harmonics as polynomials in the Cartesian components: the scaled
// associated Legendre functions Ptil_l^m = Pbar_l^m / sin^m(theta) are
// polynomials in z and the azimuthal factors sin^m(theta) {cos, sin}(m phi)
// are the Cartesian recurrences C_m, S_m; the product never needs phi or
// theta explicitly, so pole evaluations are exact.

namespace {

// Ptil_l^m(z) for fixed m, all degrees up to l; same normalized recurrence
// as Pbar with the sectoral seed's sin-powers removed.
double scaled_assoc_legendre(int l, int m, double z) {
  double pmm = std::sqrt(1.0 / (4.0 * kPi));
  for (int k = 1; k <= m; ++k) pmm *= std::sqrt((2.0 * k + 1.0) / (2.0 * k));
  if (l == m) return pmm;
  double pprev = pmm;
  double pcur = z * std::sqrt(2.0 * m + 3.0) * pmm;
  for (int ll = m + 2; ll <= l; ++ll) {
    const double a = std::sqrt((4.0 * ll * ll - 1.0) / double(ll * ll - m * m));
    const double b = std::sqrt(double((ll - 1) * (ll - 1) - m * m) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
    const double pnext = a * (z * pcur - b * pprev);
    pprev = pcur;
    pcur = pnext;
  }
  return pcur;
}

}  // namespace

Eigen::VectorXd spherical_harmonic_vector(int l, const Eigen::Vector3d& u) {
  if (l < 0) throw std::invalid_argument("spherical harmonic degree must be >= 0");
  if (std::fabs(u.norm() - 1.0) > 1e-10)
    throw std::invalid_argument("spherical harmonic argument must be a unit vector");
  const double x = u.x(), y = u.y(), z = u.z();
  Eigen::VectorXd Y(2 * l + 1);
  Y(l) = scaled_assoc_legendre(l, 0, z);
  double cm = 1.0, sm = 0.0;  // sin^m(theta) {cos,sin}(m phi) via C/S recurrences
  const double sqrt2 = std::sqrt(2.0);
  for (int m = 1; m <= l; ++m) {
    const double cnew = x * cm - y * sm;
    const double snew = x * sm + y * cm;
    cm = cnew;
    sm = snew;
    const double p = scaled_assoc_legendre(l, m, z) * sqrt2;
    Y(l + m) = p * cm;
    Y(l - m) = p * sm;
  }
  return Y;
}

double spherical_harmonic(int l, int m, const Eigen::Vector3d& u) {
  if (std::abs(m) > l) throw std::invalid_argument("spherical harmonic order exceeds degree");
  return spherical_harmonic_vector(l, u)(l + m);
}

double truncation_positivity_threshold(const Manifold& M, int L) {
  if (L < 0) throw std::invalid_argument("band limit must be >= 0");
  if (M.kind == Manifold::Kind::Euclidean) return 0.0;

  auto min_value = [&](double t) {
    KernelSpec spec;
    spec.t = t;
    spec.L_base = L;
    double mn = 1e300;
    const int N = 2001;
    for (int i = 0; i < N; ++i) {
      double v;
      if (M.kind == Manifold::Kind::Sphere2) {
        const double c = -1.0 + 2.0 * i / (N - 1.0);
        v = sphere_kernel(spec, c);
      } else {
        const double dth = 2.0 * kPi * i / (N - 1.0);
        v = circle_kernel(spec, dth);
      }
      mn = std::min(mn, v);
    }
    return mn;
  };

  double lo = 1e-6, hi = 4.0;
  if (min_value(lo) >= 0.0) return lo;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (min_value(mid) >= 0.0) hi = mid;
    else lo = mid;
  }
  return hi;
}

std::vector<Eigen::VectorXd> sample_points(const Manifold& M, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_points requires n >= 1");
  Rng rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    switch (M.kind) {
      case Manifold::Kind::Circle: {
        Eigen::VectorXd p(1);
        p[0] = rng.uniform(0.0, 2.0 * kPi);
        out.push_back(p);
        break;
      }
      case Manifold::Kind::Sphere2: {
        Eigen::Vector3d g;
        do {
          g = {rng.normal(), rng.normal(), rng.normal()};
        } while (g.norm() < 1e-8);
        out.push_back(Eigen::VectorXd(g.normalized()));
        break;
      }
      case Manifold::Kind::Euclidean: {
        Eigen::VectorXd p(M.d);
        for (int k = 0; k < M.d; ++k) p[k] = rng.uniform();
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

}  // namespace gmflow
