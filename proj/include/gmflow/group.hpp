#pragma once

#include <Eigen/Core>
#include <vector>

namespace gmflow {

enum class Group { SO2, SO3 };

// Element of SO(2) (angle in [0, 2pi)) or SO(3) (orthogonal 3x3, det +1,
// orthogonality enforced within 1e-10 at construction).
class GroupElement {
public:
  static GroupElement identity(Group g);
  static GroupElement so2(double theta);
  static GroupElement so3(const Eigen::Matrix3d& R);
  static GroupElement so3_euler_zyz(double alpha, double beta, double gamma);
  static GroupElement rot_x(double a);
  static GroupElement rot_y(double a);
  static GroupElement rot_z(double a);

  Group group() const { return tag_; }
  double angle() const;                  // SO(2) only
  const Eigen::Matrix3d& matrix() const; // SO(3) only

  // ZYZ angles (alpha, beta, gamma), alpha/gamma in [0, 2pi), beta in [0, pi].
  // At the gimbal locus (beta = 0 or pi) gamma is fixed to 0.
  Eigen::Vector3d euler_zyz() const;

private:
  GroupElement() = default;
  Group tag_ = Group::SO2;
  double theta_ = 0.0;
  Eigen::Matrix3d R_ = Eigen::Matrix3d::Identity();
};

GroupElement compose(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& g);

// Distance used by tests: angle for SO(2), Frobenius gap for SO(3).
double element_distance(const GroupElement& a, const GroupElement& b);

// Irreducible real representation label: SO(2) frequency m >= 0 (dim 1 for
// m = 0, else 2) or SO(3) degree l >= 0 (dim 2l+1).
struct IrrepLabel {
  Group tag = Group::SO2;
  int degree = 0;

  static IrrepLabel so2(int m) { return {Group::SO2, m}; }
  static IrrepLabel so3(int l) { return {Group::SO3, l}; }

  bool operator==(const IrrepLabel& o) const { return tag == o.tag && degree == o.degree; }
  bool operator<(const IrrepLabel& o) const {
    if (tag != o.tag) return tag < o.tag;
    return degree < o.degree;
  }
};

int irrep_dim(const IrrepLabel& lab);

// Direct sum of irreps with multiplicities. Storage layout of a feature
// vector: blocks in declared order; inside a block the copies are contiguous,
// each copy holding dim(lab) components.
struct RepSpace {
  struct Block {
    IrrepLabel label;
    int mult = 1;
  };
  std::vector<Block> blocks;

  int dim() const;
  int max_degree() const;
  bool all_trivial() const;
  Group group_tag() const;  // throws if blocks mix groups or the space is empty
};

// One irrep copy inside a RepSpace, with its slice [offset, offset+dim).
struct ChannelRef {
  int block = 0;
  int copy = 0;
  IrrepLabel label;
  int offset = 0;
  int dim = 0;
};
std::vector<ChannelRef> channels(const RepSpace& V);

// rho_lab(g): orthogonal dim x dim matrix, a group homomorphism. Real form:
// SO(2) m -> rotation by m*theta; SO(3) l -> conjugated Wigner matrix in the
// real basis ordered mu = -l..l, pinned by rho_1(R) = P R P^T with row map
// (y, z, x).
Eigen::MatrixXd irrep_matrix(const IrrepLabel& lab, const GroupElement& g);

// Block-diagonal action of g on a RepSpace, applied without forming the full
// matrix. rep_matrix materializes it (tests, small dims).
void rep_apply(const RepSpace& V, const GroupElement& g, const Eigen::VectorXd& in,
               Eigen::VectorXd& out);
Eigen::VectorXd rep_apply(const RepSpace& V, const GroupElement& g, const Eigen::VectorXd& in);
Eigen::MatrixXd rep_matrix(const RepSpace& V, const GroupElement& g);

// Generators d/ds rho(exp(s X_i))|_0 for the orthonormal algebra basis
// (X, Y, Z axes for SO(3), the single rotation generator for SO(2)) under
// <A,B> = -tr(AB)/2 on the fundamental. Antisymmetric within 1e-12.
std::vector<Eigen::MatrixXd> generators(const IrrepLabel& lab);

// exp(s X_i) in the group, same basis order as generators().
GroupElement exp_basis(Group tag, int axis, double s);

// Casimir -sum_i drho(X_i)^2: l(l+1) I for SO(3) degree l, m^2 I for SO(2).
Eigen::MatrixXd casimir(const IrrepLabel& lab);
double casimir_eigenvalue(const IrrepLabel& lab);
Eigen::MatrixXd casimir_on_space(const RepSpace& V);
void casimir_apply(const RepSpace& V, const Eigen::VectorXd& in, Eigen::VectorXd& out);

// Quadrature rule integrating matrix coefficients of all irreps of degree
// <= L_exact exactly against normalized Haar measure. SO(2): N >= 2L+1
// uniform nodes; SO(3): uniform alpha/gamma grids x Gauss-Legendre in
// cos(beta). Weights are positive and sum to 1.
struct QuadratureRule {
  Group tag = Group::SO2;
  int L_exact = 0;
  std::vector<GroupElement> nodes;
  std::vector<double> weights;
};

QuadratureRule haar_rule(Group tag, int L_exact);

// sum_q w_q f(g_q) for matrix- or scalar-valued f.
template <typename F>
auto integrate_over_group(const QuadratureRule& rule, F&& f) {
  auto acc = f(rule.nodes[0]);
  acc *= rule.weights[0];
  for (std::size_t q = 1; q < rule.nodes.size(); ++q) {
    auto term = f(rule.nodes[q]);
    term *= rule.weights[q];
    acc += term;
  }
  return acc;
}

// Clebsch-Gordan intertwiner for SO(3): C maps V_l into V_l1 (x) V_l2 with
// (rho_l1 (x) rho_l2)(g) C = C rho_l(g). Stored as a (d1*d2) x d matrix in
// tensor index a*d2+b; Frobenius norm 1, first entry above 1e-10 in (a,b,c)
// lexicographic order is positive. Zero when the triangle rule fails.
struct CgTensor {
  int l1 = 0, l2 = 0, l = 0;
  int d1 = 0, d2 = 0, d = 0;
  Eigen::MatrixXd mat;  // (d1*d2) x d; zero-sized when triangle-violated

  bool zero() const { return mat.size() == 0; }
  double at(int a, int b, int c) const { return mat(a * d2 + b, c); }
};

const CgTensor& clebsch_gordan(int l1, int l2, int l);

// Multiplicity of degree lam in the iterated tensor product of SO(3) degrees.
long multiplicity_in_product(const std::vector<int>& degrees, int lam);

// Character of the SO(3) degree-l irrep: 1 + 2 sum_{k<=l} cos(k*theta) with
// theta the rotation angle of g.
double so3_character(int l, const GroupElement& g);
double rotation_angle(const GroupElement& g);  // SO(3): angle in [0, pi]

}  // namespace gmflow
