#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "gmflow/group.hpp"
#include "gmflow/util.hpp"
#include "oracles.hpp"

using namespace gmflow;
using oracles::kPi;

namespace {

Eigen::Matrix3d perm_yzx() {
  Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
  P(0, 1) = 1;  // row 0 reads y
  P(1, 2) = 1;  // row 1 reads z
  P(2, 0) = 1;  // row 2 reads x
  return P;
}

}  // namespace

TEST_CASE("compose and inverse follow the group law") {
  const GroupElement a = GroupElement::so2(0.3);
  const GroupElement b = GroupElement::so2(0.4);
  CHECK(compose(a, b).angle() == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(compose(GroupElement::so2(5.0), GroupElement::so2(2.0)).angle() ==
        doctest::Approx(7.0 - 2.0 * kPi).epsilon(1e-12));
  CHECK(element_distance(compose(a, inverse(a)), GroupElement::identity(Group::SO2)) < 1e-14);

  Rng rng(71);
  for (int i = 0; i < 20; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    const GroupElement h = oracles::random_so3(rng);
    CHECK((compose(g, h).matrix() - g.matrix() * h.matrix()).norm() < 1e-14);
    CHECK(element_distance(compose(g, inverse(g)), GroupElement::identity(Group::SO3)) < 1e-13);
  }
  CHECK_THROWS_AS(compose(a, GroupElement::identity(Group::SO3)), std::invalid_argument);
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS(GroupElement::so3(bad), std::invalid_argument);
}

TEST_CASE("euler angles round trip") {
  Rng rng(72);
  for (int i = 0; i < 50; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    const Eigen::Vector3d e = g.euler_zyz();
    const GroupElement h = GroupElement::so3_euler_zyz(e[0], e[1], e[2]);
    CHECK((g.matrix() - h.matrix()).norm() < 1e-12);
  }
  // gimbal locus
  const Eigen::Vector3d e0 = GroupElement::rot_z(0.7).euler_zyz();
  CHECK(e0[0] == doctest::Approx(0.7).epsilon(1e-13));
  CHECK(e0[1] == 0.0);
  CHECK(e0[2] == 0.0);
  const GroupElement flip = compose(GroupElement::rot_z(1.1), GroupElement::rot_y(kPi));
  const Eigen::Vector3d e1 = flip.euler_zyz();
  const GroupElement back = GroupElement::so3_euler_zyz(e1[0], e1[1], e1[2]);
  CHECK((flip.matrix() - back.matrix()).norm() < 1e-9);
}

TEST_CASE("so2 irrep matrices rotate by m theta") {
  const GroupElement g = GroupElement::so2(0.4);
  CHECK(irrep_matrix(IrrepLabel::so2(0), g)(0, 0) == 1.0);
  const Eigen::MatrixXd D = irrep_matrix(IrrepLabel::so2(2), g);
  CHECK(D(0, 0) == doctest::Approx(std::cos(0.8)).epsilon(1e-14));
  CHECK(D(0, 1) == doctest::Approx(-std::sin(0.8)).epsilon(1e-14));
  CHECK(D(1, 0) == doctest::Approx(std::sin(0.8)).epsilon(1e-14));
  CHECK(D(1, 1) == doctest::Approx(std::cos(0.8)).epsilon(1e-14));
}

TEST_CASE("so3 degree-1 matrix is the permuted rotation") {
  // pins the real basis order mu = (-1,0,1) <-> (y,z,x)
  const Eigen::Matrix3d P = perm_yzx();
  Rng rng(73);
  for (int i = 0; i < 20; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    const Eigen::MatrixXd D = irrep_matrix(IrrepLabel::so3(1), g);
    CHECK((D - P * g.matrix() * P.transpose()).norm() < 1e-12);
  }
  const Eigen::MatrixXd Dz = irrep_matrix(IrrepLabel::so3(1), GroupElement::rot_z(0.3));
  // z-rotation acts on the (sin, cos) pair at mu = -1, +1 and fixes mu = 0
  CHECK(Dz(1, 1) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(Dz(2, 2) == doctest::Approx(std::cos(0.3)).epsilon(1e-12));
  CHECK(Dz(2, 0) == doctest::Approx(-std::sin(0.3)).epsilon(1e-12));
  CHECK(Dz(0, 2) == doctest::Approx(std::sin(0.3)).epsilon(1e-12));
}

TEST_CASE("generators match centered differences") {
  // centered difference with step 1e-5: truncation ~ h^2 |K|^3 / 6 plus
  // roundoff in the exponentials amplified by 1/(2h), so ~1e-7 at l = 4
  const double h = 1e-5;
  for (int m = 0; m <= 4; ++m) {
    const IrrepLabel lab = IrrepLabel::so2(m);
    const auto K = generators(lab);
    REQUIRE(K.size() == 1);
    CHECK((K[0] + K[0].transpose()).norm() <= 1e-12);
    CHECK((K[0] - oracles::fd_generator(lab, 0, h)).cwiseAbs().maxCoeff() < 1e-6);
  }
  for (int l = 0; l <= 4; ++l) {
    const IrrepLabel lab = IrrepLabel::so3(l);
    const auto K = generators(lab);
    REQUIRE(K.size() == 3);
    for (int axis = 0; axis < 3; ++axis) {
      CHECK((K[axis] + K[axis].transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((K[axis] - oracles::fd_generator(lab, axis, h)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("one-parameter flows exponentiate the generators") {
  for (int l = 1; l <= 4; ++l) {
    const IrrepLabel lab = IrrepLabel::so3(l);
    const auto K = generators(lab);
    for (int axis = 0; axis < 3; ++axis) {
      for (double s : {0.3, 1.2, -0.7}) {
        const Eigen::MatrixXd lhs = oracles::taylor_exp(s * K[axis]);
        const Eigen::MatrixXd rhs = irrep_matrix(lab, exp_basis(Group::SO3, axis, s));
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
  for (int m = 1; m <= 4; ++m) {
    const IrrepLabel lab = IrrepLabel::so2(m);
    const auto K = generators(lab);
    const Eigen::MatrixXd lhs = oracles::taylor_exp(0.9 * K[0]);
    const Eigen::MatrixXd rhs = irrep_matrix(lab, exp_basis(Group::SO2, 0, 0.9));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-11);
  }
}

TEST_CASE("irrep matrices form orthogonal homomorphisms") {
  Rng rng(74);
  for (int l = 0; l <= 4; ++l) {
    const IrrepLabel lab = IrrepLabel::so3(l);
    const int d = irrep_dim(lab);
    for (int i = 0; i < 25; ++i) {
      const GroupElement g = oracles::random_so3(rng);
      const GroupElement h = oracles::random_so3(rng);
      const Eigen::MatrixXd Dg = irrep_matrix(lab, g);
      const Eigen::MatrixXd Dh = irrep_matrix(lab, h);
      const Eigen::MatrixXd Dgh = irrep_matrix(lab, compose(g, h));
      CHECK((Dgh - Dg * Dh).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((Dg.transpose() * Dg - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-11);
      CHECK((irrep_matrix(lab, inverse(g)) - Dg.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  for (int m = 0; m <= 4; ++m) {
    const IrrepLabel lab = IrrepLabel::so2(m);
    for (int i = 0; i < 25; ++i) {
      const GroupElement g = oracles::random_element(Group::SO2, rng);
      const GroupElement h = oracles::random_element(Group::SO2, rng);
      const Eigen::MatrixXd err =
          irrep_matrix(lab, compose(g, h)) - irrep_matrix(lab, g) * irrep_matrix(lab, h);
      CHECK(err.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("casimir has the exact spectrum and commutes with the action") {
  Rng rng(75);
  for (int l = 0; l <= 4; ++l) {
    const IrrepLabel lab = IrrepLabel::so3(l);
    const int d = irrep_dim(lab);
    const Eigen::MatrixXd C = casimir(lab);
    CHECK((C - double(l * (l + 1)) * Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-12);
    // definition check: -sum_i K_i^2 reproduces the scalar
    const auto K = generators(lab);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
    for (const auto& Ka : K) S -= Ka * Ka;
    CHECK((S - C).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::MatrixXd D = irrep_matrix(lab, oracles::random_so3(rng));
    CHECK((C * D - D * C).cwiseAbs().maxCoeff() < 1e-10);
  }
  for (int m = 0; m <= 4; ++m) {
    const IrrepLabel lab = IrrepLabel::so2(m);
    const Eigen::MatrixXd C = casimir(lab);
    CHECK((C - double(m * m) * Eigen::MatrixXd::Identity(C.rows(), C.cols())).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(casimir_eigenvalue(IrrepLabel::so3(3)) == 12.0);
}

TEST_CASE("representation spaces apply blockwise") {
  RepSpace V{{{IrrepLabel::so3(0), 2}, {IrrepLabel::so3(1), 1}, {IrrepLabel::so3(2), 1}}};
  CHECK(V.dim() == 2 + 3 + 5);
  const auto chans = channels(V);
  REQUIRE(chans.size() == 4);
  CHECK(chans[1].offset == 1);
  CHECK(chans[2].offset == 2);
  CHECK(chans[3].dim == 5);

  Rng rng(76);
  const GroupElement g = oracles::random_so3(rng);
  Eigen::VectorXd x(V.dim());
  for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();
  const Eigen::VectorXd y = rep_apply(V, g, x);
  CHECK((y - rep_matrix(V, g) * x).norm() < 1e-12);
  CHECK((y.head(2) - x.head(2)).norm() == 0.0);  // trivial channels untouched

  Eigen::VectorXd cy;
  casimir_apply(V, x, cy);
  CHECK((cy - casimir_on_space(V) * x).norm() == 0.0);

  RepSpace mixed{{{IrrepLabel::so3(0), 1}, {IrrepLabel::so2(1), 1}}};
  CHECK_THROWS_AS(mixed.group_tag(), std::invalid_argument);
}

TEST_CASE("haar rules certify their band limit") {
  for (int L = 0; L <= 5; ++L) {
    const QuadratureRule r2 = haar_rule(Group::SO2, L);
    CHECK(static_cast<int>(r2.nodes.size()) == 2 * L + 1);
    double ws = 0.0;
    for (double w : r2.weights) ws += w;
    CHECK(ws == doctest::Approx(1.0).epsilon(1e-14));
    for (int m = 1; m <= L; ++m) {
      const Eigen::MatrixXd I1 = integrate_over_group(
          r2, [&](const GroupElement& g) { return irrep_matrix(IrrepLabel::so2(m), g); });
      CHECK(I1.cwiseAbs().maxCoeff() < 1e-12);
    }

    const QuadratureRule r3 = haar_rule(Group::SO3, L);
    CHECK(static_cast<int>(r3.nodes.size()) == (2 * L + 1) * (2 * L + 1) * (L + 1));
    ws = 0.0;
    for (double w : r3.weights) {
      CHECK(w > 0.0);
      ws += w;
    }
    CHECK(ws == doctest::Approx(1.0).epsilon(1e-13));
    for (int l = 1; l <= L; ++l) {
      const Eigen::MatrixXd I1 = integrate_over_group(
          r3, [&](const GroupElement& g) { return irrep_matrix(IrrepLabel::so3(l), g); });
      CHECK(I1.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("quadrature matches the squared-character integrals") {
  // expected values derived with the doubled-order rule, then checked
  // against the closed forms (1 for SO(3), 2 for a complex-type SO(2) pair)
  const QuadratureRule rule = haar_rule(Group::SO3, 2);
  const QuadratureRule oracle = haar_rule(Group::SO3, 5);
  auto chi1sq = [](const GroupElement& g) {
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = so3_character(1, g) * so3_character(1, g);
    return v;
  };
  const double a = integrate_over_group(rule, chi1sq)(0, 0);
  const double b = integrate_over_group(oracle, chi1sq)(0, 0);
  CHECK(std::fabs(a - b) < 1e-12);
  CHECK(a == doctest::Approx(1.0).epsilon(1e-12));

  const QuadratureRule r2 = haar_rule(Group::SO2, 2);
  const QuadratureRule o2 = haar_rule(Group::SO2, 5);
  auto chim = [](const GroupElement& g) {
    Eigen::MatrixXd v(1, 1);
    const double c = 2.0 * std::cos(g.angle());
    v(0, 0) = c * c;
    return v;
  };
  const double a2 = integrate_over_group(r2, chim)(0, 0);
  CHECK(std::fabs(a2 - integrate_over_group(o2, chim)(0, 0)) < 1e-13);
  CHECK(a2 == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("characters match irrep traces") {
  Rng rng(77);
  for (int i = 0; i < 20; ++i) {
    const GroupElement g = oracles::random_so3(rng);
    for (int l = 0; l <= 4; ++l)
      CHECK(so3_character(l, g) == doctest::Approx(irrep_matrix(IrrepLabel::so3(l), g).trace()).epsilon(1e-10));
  }
}

TEST_CASE("schur averages collapse matrix coefficients") {
  for (int l = 1; l <= 3; ++l) {
    const QuadratureRule rule = haar_rule(Group::SO3, 2 * l);
    const int d = 2 * l + 1;
    const Eigen::MatrixXd avg = integrate_over_group(rule, [&](const GroupElement& g) {
      return Eigen::MatrixXd(so3_character(l, g) * irrep_matrix(IrrepLabel::so3(l), inverse(g)));
    });
    CHECK((avg - Eigen::MatrixXd::Identity(d, d) / d).cwiseAbs().maxCoeff() < 1e-10);
    // cross terms vanish
    const QuadratureRule rx = haar_rule(Group::SO3, 2 * l + 1);
    const Eigen::MatrixXd cross = integrate_over_group(rx, [&](const GroupElement& g) {
      return Eigen::MatrixXd(so3_character(l + 1, g) * irrep_matrix(IrrepLabel::so3(l), inverse(g)));
    });
    CHECK(cross.cwiseAbs().maxCoeff() < 1e-11);
  }
  // SO(2) complex-type irreps average to the identity with unit constant
  for (int m = 1; m <= 3; ++m) {
    const QuadratureRule rule = haar_rule(Group::SO2, 2 * m);
    const Eigen::MatrixXd avg = integrate_over_group(rule, [&](const GroupElement& g) {
      return Eigen::MatrixXd(2.0 * std::cos(m * g.angle()) * irrep_matrix(IrrepLabel::so2(m), inverse(g)));
    });
    CHECK((avg - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("clebsch gordan tensors intertwine the product action") {
  Rng rng(78);
  const int triples[][3] = {{1, 1, 0}, {1, 1, 1}, {1, 1, 2}, {1, 2, 1}, {2, 2, 0}, {2, 2, 1}, {1, 2, 3}};
  for (const auto& t : triples) {
    const CgTensor& C = clebsch_gordan(t[0], t[1], t[2]);
    REQUIRE(!C.zero());
    CHECK(C.mat.norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 10; ++i) {
      const GroupElement g = oracles::random_so3(rng);
      const Eigen::MatrixXd D1 = irrep_matrix(IrrepLabel::so3(t[0]), g);
      const Eigen::MatrixXd D2 = irrep_matrix(IrrepLabel::so3(t[1]), g);
      const Eigen::MatrixXd Dl = irrep_matrix(IrrepLabel::so3(t[2]), g);
      const Eigen::MatrixXd lhs = oracles::kron(D1, D2) * C.mat;
      const Eigen::MatrixXd rhs = C.mat * Dl;
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("clebsch gordan handles degenerate labels") {
  CHECK(clebsch_gordan(1, 1, 3).zero());
  CHECK(clebsch_gordan(0, 2, 1).zero());
  const CgTensor& triv = clebsch_gordan(0, 0, 0);
  REQUIRE(!triv.zero());
  CHECK(triv.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  // pairing with the trivial output is the normalized inner product
  const CgTensor& pair = clebsch_gordan(1, 1, 0);
  const double c = 1.0 / std::sqrt(3.0);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      CHECK(pair.at(a, b, 0) == doctest::Approx(a == b ? c : 0.0).epsilon(1e-10));
}

TEST_CASE("clebsch gordan direction agrees with the averaging projector") {
  // oracle: top eigenvector of P = integral rho_l1 (x) rho_l2 (x) rho_l dg
  for (const auto& t : {std::array<int, 3>{1, 1, 2}, std::array<int, 3>{1, 2, 1}}) {
    const int d1 = 2 * t[0] + 1, d2 = 2 * t[1] + 1, d = 2 * t[2] + 1;
    const QuadratureRule rule = haar_rule(Group::SO3, t[0] + t[1] + t[2] + 2);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(d1 * d2 * d, d1 * d2 * d);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const GroupElement& g = rule.nodes[q];
      const Eigen::MatrixXd D12 =
          oracles::kron(irrep_matrix(IrrepLabel::so3(t[0]), g), irrep_matrix(IrrepLabel::so3(t[1]), g));
      P += rule.weights[q] * oracles::kron(D12, irrep_matrix(IrrepLabel::so3(t[2]), g));
    }
    CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(P.trace() == doctest::Approx(1.0).epsilon(1e-10));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (P + P.transpose()));
    const Eigen::VectorXd top = es.eigenvectors().col(d1 * d2 * d - 1);

    const CgTensor& C = clebsch_gordan(t[0], t[1], t[2]);
    Eigen::VectorXd v(d1 * d2 * d);
    for (int a = 0; a < d1; ++a)
      for (int b = 0; b < d2; ++b)
        for (int c = 0; c < d; ++c) v[(a * d2 + b) * d + c] = C.at(a, b, c);
    const double overlap = std::fabs(top.dot(v));
    CHECK(overlap == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("product multiplicities follow the triangle rule") {
  CHECK(multiplicity_in_product({1, 1}, 0) == 1);
  CHECK(multiplicity_in_product({1, 1}, 1) == 1);
  CHECK(multiplicity_in_product({1, 1}, 2) == 1);
  CHECK(multiplicity_in_product({1, 1}, 3) == 0);
  CHECK(multiplicity_in_product({1, 1, 1}, 0) == 1);
  CHECK(multiplicity_in_product({1, 1, 1}, 1) == 3);
  CHECK(multiplicity_in_product({2, 3}, 1) == 1);
  CHECK(multiplicity_in_product({2, 3}, 6) == 0);
  CHECK(multiplicity_in_product({}, 0) == 1);
  CHECK(multiplicity_in_product({2}, 2) == 1);
}
