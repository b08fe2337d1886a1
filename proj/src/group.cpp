#include "gmflow/group.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "gmflow/util.hpp"

namespace gmflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  double r = std::fmod(a, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  // fmod can return exactly 2*pi after the correction when a is a tiny
  // negative number; fold that back to 0.
  if (r >= 2.0 * kPi) r = 0.0;
  return r;
}

Eigen::Matrix3d axis_rotation(int axis, double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  switch (axis) {
    case 0:  // x
      R(1, 1) = c; R(1, 2) = -s; R(2, 1) = s; R(2, 2) = c;
      break;
    case 1:  // y
      R(0, 0) = c; R(0, 2) = s; R(2, 0) = -s; R(2, 2) = c;
      break;
    case 2:  // z
      R(0, 0) = c; R(0, 1) = -s; R(1, 0) = s; R(1, 1) = c;
      break;
    default:
      throw std::invalid_argument("axis must be 0, 1 or 2");
  }
  return R;
}

}  // namespace

// ---------------------------------------------------------------------------
// GroupElement

GroupElement GroupElement::identity(Group g) {
  GroupElement e;
  e.tag_ = g;
  return e;
}

GroupElement GroupElement::so2(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("SO(2) angle must be finite");
  GroupElement e;
  e.tag_ = Group::SO2;
  e.theta_ = wrap_angle(theta);
  return e;
}

GroupElement GroupElement::so3(const Eigen::Matrix3d& R) {
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).norm();
  if (!(ortho <= 1e-10)) throw std::invalid_argument("SO(3) matrix is not orthogonal");
  if (R.determinant() < 0) throw std::invalid_argument("SO(3) matrix has negative determinant");
  GroupElement e;
  e.tag_ = Group::SO3;
  e.R_ = R;
  return e;
}

GroupElement GroupElement::so3_euler_zyz(double alpha, double beta, double gamma) {
  return so3(axis_rotation(2, alpha) * axis_rotation(1, beta) * axis_rotation(2, gamma));
}

GroupElement GroupElement::rot_x(double a) { return so3(axis_rotation(0, a)); }
GroupElement GroupElement::rot_y(double a) { return so3(axis_rotation(1, a)); }
GroupElement GroupElement::rot_z(double a) { return so3(axis_rotation(2, a)); }

double GroupElement::angle() const {
  if (tag_ != Group::SO2) throw std::invalid_argument("angle() requires an SO(2) element");
  return theta_;
}

const Eigen::Matrix3d& GroupElement::matrix() const {
  if (tag_ != Group::SO3) throw std::invalid_argument("matrix() requires an SO(3) element");
  return R_;
}

Eigen::Vector3d GroupElement::euler_zyz() const {
  const Eigen::Matrix3d& R = matrix();
  const double cb = std::clamp(R(2, 2), -1.0, 1.0);
  const double sb = std::sqrt(std::max(0.0, 1.0 - cb * cb));
  double alpha, beta, gamma;
  if (sb < 1e-9) {
    // gimbal locus: R is a z-rotation (beta = 0) or z-rotation times Ry(pi)
    gamma = 0.0;
    if (cb > 0) {
      beta = 0.0;
      alpha = std::atan2(R(1, 0), R(0, 0));
    } else {
      beta = kPi;
      alpha = std::atan2(-R(0, 1), -R(0, 0));
    }
  } else {
    beta = std::acos(cb);
    alpha = std::atan2(R(1, 2), R(0, 2));
    gamma = std::atan2(R(2, 1), -R(2, 0));
  }
  return {wrap_angle(alpha), beta, wrap_angle(gamma)};
}

GroupElement compose(const GroupElement& a, const GroupElement& b) {
  if (a.group() != b.group()) throw std::invalid_argument("compose: mixed group tags");
  if (a.group() == Group::SO2) return GroupElement::so2(a.angle() + b.angle());
  return GroupElement::so3(a.matrix() * b.matrix());
}

GroupElement inverse(const GroupElement& g) {
  if (g.group() == Group::SO2) return GroupElement::so2(-g.angle());
  return GroupElement::so3(g.matrix().transpose());
}

double element_distance(const GroupElement& a, const GroupElement& b) {
  if (a.group() != b.group()) throw std::invalid_argument("element_distance: mixed group tags");
  if (a.group() == Group::SO2) {
    double d = std::fabs(wrap_angle(a.angle() - b.angle()));
    return std::min(d, 2.0 * kPi - d);
  }
  return (a.matrix() - b.matrix()).norm();
}

// ---------------------------------------------------------------------------
// Representation spaces

int irrep_dim(const IrrepLabel& lab) {
  if (lab.degree < 0) throw std::invalid_argument("irrep degree must be >= 0");
  if (lab.tag == Group::SO2) return lab.degree == 0 ? 1 : 2;
  return 2 * lab.degree + 1;
}

int RepSpace::dim() const {
  int d = 0;
  for (const auto& b : blocks) d += b.mult * irrep_dim(b.label);
  return d;
}

int RepSpace::max_degree() const {
  int m = 0;
  for (const auto& b : blocks) m = std::max(m, b.label.degree);
  return m;
}

bool RepSpace::all_trivial() const {
  for (const auto& b : blocks)
    if (b.label.degree != 0) return false;
  return true;
}

Group RepSpace::group_tag() const {
  if (blocks.empty()) throw std::invalid_argument("empty representation space");
  const Group t = blocks.front().label.tag;
  for (const auto& b : blocks) {
    if (b.label.tag != t) throw std::invalid_argument("representation mixes group tags");
    if (b.mult < 1) throw std::invalid_argument("block multiplicity must be >= 1");
  }
  return t;
}

std::vector<ChannelRef> channels(const RepSpace& V) {
  std::vector<ChannelRef> out;
  int off = 0;
  for (int b = 0; b < static_cast<int>(V.blocks.size()); ++b) {
    const int d = irrep_dim(V.blocks[b].label);
    for (int c = 0; c < V.blocks[b].mult; ++c) {
      out.push_back({b, c, V.blocks[b].label, off, d});
      off += d;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Real irrep matrices and generators
//
// SO(3) degree-l matrices act on the real harmonic basis ordered
// mu = -l..l; basis functions have positive prefactors
// (Ytil_m ~ Pbar_l^m cos(m phi), Ytil_{-m} ~ Pbar_l^m sin(m phi)), so the
// l = 1 representation is P R P^T with row map (y, z, x). Generators come
// from the complex ladder operators conjugated into the real basis.

namespace {

using CMat = Eigen::MatrixXcd;

std::vector<Eigen::MatrixXd> build_so3_generators(int l) {
  const int d = 2 * l + 1;
  const std::complex<double> I(0.0, 1.0);

  CMat Jz = CMat::Zero(d, d), Jp = CMat::Zero(d, d);
  for (int m = -l; m <= l; ++m) {
    Jz(m + l, m + l) = m;
    if (m < l) Jp(m + 1 + l, m + l) = std::sqrt(double(l * (l + 1) - m * (m + 1)));
  }
  const CMat Jm = Jp.transpose();
  const CMat Jx = 0.5 * (Jp + Jm);
  const CMat Jy = -0.5 * I * (Jp - Jm);

  // Unitary change to the real basis: Ytil = U Y.
  CMat U = CMat::Zero(d, d);
  U(l, l) = 1.0;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int m = 1; m <= l; ++m) {
    const double cs = (m % 2 == 0) ? 1.0 : -1.0;  // (-1)^m
    U(l + m, l + m) = cs * inv_sqrt2;
    U(l + m, l - m) = inv_sqrt2;
    U(l - m, l + m) = -I * cs * inv_sqrt2;
    U(l - m, l - m) = I * inv_sqrt2;
  }

  std::vector<Eigen::MatrixXd> K(3);
  const std::array<const CMat*, 3> J = {&Jx, &Jy, &Jz};
  for (int a = 0; a < 3; ++a) {
    const CMat G = U * (I * (*J[a])).transpose() * U.adjoint();
    if (G.imag().cwiseAbs().maxCoeff() > 1e-12)
      throw std::runtime_error("real generator construction produced imaginary parts");
    Eigen::MatrixXd Kr = G.real();
    if ((Kr + Kr.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::runtime_error("real generator is not antisymmetric");
    K[a] = Kr;
  }
  return K;
}

const std::vector<Eigen::MatrixXd>& so3_generators(int l) {
  static std::map<int, std::unique_ptr<std::vector<Eigen::MatrixXd>>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(l);
  if (it == cache.end())
    it = cache.emplace(l, std::make_unique<std::vector<Eigen::MatrixXd>>(build_so3_generators(l))).first;
  return *it->second;
}

Eigen::Matrix2d so2_block(int m, double theta) {
  const double c = std::cos(m * theta), s = std::sin(m * theta);
  Eigen::Matrix2d B;
  B << c, -s, s, c;
  return B;
}

}  // namespace

Eigen::MatrixXd irrep_matrix(const IrrepLabel& lab, const GroupElement& g) {
  if (lab.tag != g.group()) throw std::invalid_argument("irrep_matrix: label and element group differ");
  if (lab.degree < 0) throw std::invalid_argument("irrep degree must be >= 0");
  if (lab.tag == Group::SO2) {
    if (lab.degree == 0) return Eigen::MatrixXd::Identity(1, 1);
    return so2_block(lab.degree, g.angle());
  }
  const int l = lab.degree;
  if (l == 0) return Eigen::MatrixXd::Identity(1, 1);
  const auto& K = so3_generators(l);
  const Eigen::Vector3d e = g.euler_zyz();
  const Eigen::MatrixXd Dz1 = (e[0] * K[2]).exp();
  const Eigen::MatrixXd Dy = (e[1] * K[1]).exp();
  const Eigen::MatrixXd Dz2 = (e[2] * K[2]).exp();
  return Dz1 * Dy * Dz2;
}

void rep_apply(const RepSpace& V, const GroupElement& g, const Eigen::VectorXd& in,
               Eigen::VectorXd& out) {
  if (in.size() != V.dim()) throw std::invalid_argument("rep_apply: vector does not match space");
  out.resize(in.size());
  int off = 0;
  for (const auto& b : V.blocks) {
    const int d = irrep_dim(b.label);
    if (b.label.degree == 0) {
      out.segment(off, b.mult) = in.segment(off, b.mult);
      off += b.mult;
      continue;
    }
    const Eigen::MatrixXd D = irrep_matrix(b.label, g);
    for (int c = 0; c < b.mult; ++c) {
      out.segment(off, d) = D * in.segment(off, d);
      off += d;
    }
  }
}

Eigen::VectorXd rep_apply(const RepSpace& V, const GroupElement& g, const Eigen::VectorXd& in) {
  Eigen::VectorXd out;
  rep_apply(V, g, in, out);
  return out;
}

Eigen::MatrixXd rep_matrix(const RepSpace& V, const GroupElement& g) {
  const int n = V.dim();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  int off = 0;
  for (const auto& b : V.blocks) {
    const int d = irrep_dim(b.label);
    const Eigen::MatrixXd D = irrep_matrix(b.label, g);
    for (int c = 0; c < b.mult; ++c) {
      M.block(off, off, d, d) = D;
      off += d;
    }
  }
  return M;
}

std::vector<Eigen::MatrixXd> generators(const IrrepLabel& lab) {
  if (lab.degree < 0) throw std::invalid_argument("irrep degree must be >= 0");
  if (lab.tag == Group::SO2) {
    if (lab.degree == 0) return {Eigen::MatrixXd::Zero(1, 1)};
    Eigen::MatrixXd K(2, 2);
    K << 0, -lab.degree, lab.degree, 0;
    return {K};
  }
  if (lab.degree == 0) {
    return {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1)};
  }
  return so3_generators(lab.degree);
}

GroupElement exp_basis(Group tag, int axis, double s) {
  if (tag == Group::SO2) {
    if (axis != 0) throw std::invalid_argument("SO(2) has a single generator (axis 0)");
    return GroupElement::so2(s);
  }
  return GroupElement::so3(axis_rotation(axis, s));
}

double casimir_eigenvalue(const IrrepLabel& lab) {
  if (lab.degree < 0) throw std::invalid_argument("irrep degree must be >= 0");
  const double k = lab.degree;
  return lab.tag == Group::SO2 ? k * k : k * (k + 1.0);
}

Eigen::MatrixXd casimir(const IrrepLabel& lab) {
  const int d = irrep_dim(lab);
  return casimir_eigenvalue(lab) * Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd casimir_on_space(const RepSpace& V) {
  const int n = V.dim();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  int off = 0;
  for (const auto& b : V.blocks) {
    const int d = irrep_dim(b.label);
    const double c = casimir_eigenvalue(b.label);
    for (int k = 0; k < b.mult; ++k) {
      M.block(off, off, d, d).diagonal().setConstant(c);
      off += d;
    }
  }
  return M;
}

void casimir_apply(const RepSpace& V, const Eigen::VectorXd& in, Eigen::VectorXd& out) {
  if (in.size() != V.dim()) throw std::invalid_argument("casimir_apply: vector does not match space");
  out.resize(in.size());
  int off = 0;
  for (const auto& b : V.blocks) {
    const int d = irrep_dim(b.label);
    const double c = casimir_eigenvalue(b.label);
    const int len = d * b.mult;
    out.segment(off, len) = c * in.segment(off, len);
    off += len;
  }
}

// ---------------------------------------------------------------------------
// Haar quadrature

namespace {

// Gauss-Legendre nodes/weights on [-1,1], Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::fabs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace

QuadratureRule haar_rule(Group tag, int L_exact) {
  if (L_exact < 0) throw std::invalid_argument("haar_rule: L_exact must be >= 0");
  QuadratureRule rule;
  rule.tag = tag;
  rule.L_exact = L_exact;
  if (tag == Group::SO2) {
    const int N = 2 * L_exact + 1;
    rule.nodes.reserve(N);
    rule.weights.assign(N, 1.0 / N);
    for (int k = 0; k < N; ++k) rule.nodes.push_back(GroupElement::so2(2.0 * kPi * k / N));
    return rule;
  }
  const int Na = 2 * L_exact + 1, Ng = 2 * L_exact + 1, Nb = L_exact + 1;
  std::vector<double> xb, wb;
  gauss_legendre(Nb, xb, wb);
  rule.nodes.reserve(Na * Nb * Ng);
  rule.weights.reserve(Na * Nb * Ng);
  for (int i = 0; i < Na; ++i) {
    const double alpha = 2.0 * kPi * i / Na;
    for (int j = 0; j < Nb; ++j) {
      const double beta = std::acos(std::clamp(xb[j], -1.0, 1.0));
      for (int k = 0; k < Ng; ++k) {
        const double gamma = 2.0 * kPi * k / Ng;
        rule.nodes.push_back(GroupElement::so3_euler_zyz(alpha, beta, gamma));
        rule.weights.push_back(wb[j] / (2.0 * Na * Ng));
      }
    }
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Clebsch-Gordan intertwiners
//
// The projector C -> integral (rho_l1 (x) rho_l2)(g) C rho_l(g)^T dg maps any
// trial onto the intertwiner space, which is 1-dimensional when the triangle
// rule holds. Quadrature with L_exact = l1+l2+l makes the projection exact.

namespace {

std::unique_ptr<CgTensor> build_cg(int l1, int l2, int l) {
  auto out = std::make_unique<CgTensor>();
  out->l1 = l1;
  out->l2 = l2;
  out->l = l;
  out->d1 = 2 * l1 + 1;
  out->d2 = 2 * l2 + 1;
  out->d = 2 * l + 1;
  if (l < std::abs(l1 - l2) || l > l1 + l2) return out;  // triangle violated: zero tensor

  const int d1 = out->d1, d2 = out->d2, d = out->d;
  const QuadratureRule rule = haar_rule(Group::SO3, l1 + l2 + l);
  const IrrepLabel L1 = IrrepLabel::so3(l1), L2 = IrrepLabel::so3(l2), L = IrrepLabel::so3(l);

  Rng rng(0x9E3779B97F4A7C15ULL ^ (std::uint64_t(l1) * 73856093ULL +
                                   std::uint64_t(l2) * 19349663ULL + std::uint64_t(l) * 83492791ULL));
  Eigen::MatrixXd T;
  double norm = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd C0(d1 * d2, d);
    for (int i = 0; i < C0.size(); ++i) C0.data()[i] = rng.uniform(-1.0, 1.0);

    T = Eigen::MatrixXd::Zero(d1 * d2, d);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const Eigen::MatrixXd D1 = irrep_matrix(L1, rule.nodes[q]);
      const Eigen::MatrixXd D2 = irrep_matrix(L2, rule.nodes[q]);
      const Eigen::MatrixXd Dl = irrep_matrix(L, rule.nodes[q]);
      // Y[(a,b'),c'] = sum_a' D1(a,a') C0[(a',b'),c'] via per-slice products
      Eigen::MatrixXd Y(d1 * d2, d);
      for (int b = 0; b < d2; ++b) {
        Eigen::MatrixXd slice(d1, d);
        for (int a = 0; a < d1; ++a) slice.row(a) = C0.row(a * d2 + b);
        slice = D1 * slice;
        for (int a = 0; a < d1; ++a) Y.row(a * d2 + b) = slice.row(a);
      }
      Eigen::MatrixXd Z(d1 * d2, d);
      for (int a = 0; a < d1; ++a)
        Z.middleRows(a * d2, d2) = D2 * Y.middleRows(a * d2, d2);
      T.noalias() += rule.weights[q] * Z * Dl.transpose();
    }
    norm = T.norm();
    if (norm > 1e-6) break;
  }
  if (norm <= 1e-6)
    throw std::runtime_error("Clebsch-Gordan projection degenerated for admissible labels");

  T /= norm;
  // sign convention: first coefficient above threshold in (a,b,c) lex order is positive
  for (int a = 0; a < d1 && true; ++a) {
    bool done = false;
    for (int b = 0; b < d2 && !done; ++b)
      for (int c = 0; c < d && !done; ++c) {
        const double v = T(a * d2 + b, c);
        if (std::fabs(v) > 1e-10) {
          if (v < 0) T = -T;
          done = true;
        }
      }
    if (done) break;
  }
  out->mat = std::move(T);
  return out;
}

}  // namespace

const CgTensor& clebsch_gordan(int l1, int l2, int l) {
  if (l1 < 0 || l2 < 0 || l < 0) throw std::invalid_argument("clebsch_gordan: degrees must be >= 0");
  static std::map<std::array<int, 3>, std::unique_ptr<CgTensor>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const std::array<int, 3> key = {l1, l2, l};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_cg(l1, l2, l)).first;
  return *it->second;
}

long multiplicity_in_product(const std::vector<int>& degrees, int lam) {
  if (lam < 0) throw std::invalid_argument("multiplicity_in_product: lam must be >= 0");
  for (int d : degrees)
    if (d < 0) throw std::invalid_argument("multiplicity_in_product: degrees must be >= 0");
  if (degrees.empty()) return lam == 0 ? 1 : 0;
  std::map<int, long> dist;
  dist[degrees[0]] = 1;
  for (std::size_t i = 1; i < degrees.size(); ++i) {
    std::map<int, long> next;
    for (const auto& [a, mult] : dist)
      for (int c = std::abs(a - degrees[i]); c <= a + degrees[i]; ++c) next[c] += mult;
    dist = std::move(next);
  }
  auto it = dist.find(lam);
  return it == dist.end() ? 0 : it->second;
}

double rotation_angle(const GroupElement& g) {
  const double tr = g.matrix().trace();
  return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

double so3_character(int l, const GroupElement& g) {
  if (l < 0) throw std::invalid_argument("so3_character: l must be >= 0");
  const double th = rotation_angle(g);
  double chi = 1.0;
  for (int k = 1; k <= l; ++k) chi += 2.0 * std::cos(k * th);
  return chi;
}

}  // namespace gmflow
