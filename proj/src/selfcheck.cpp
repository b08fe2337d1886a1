#include "gmflow/selfcheck.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmflow/bundle.hpp"
#include "gmflow/diffusion.hpp"
#include "gmflow/graph.hpp"
#include "gmflow/group.hpp"
#include "gmflow/io.hpp"
#include "gmflow/manifold.hpp"
#include "gmflow/message.hpp"
#include "gmflow/util.hpp"
#include "json.hpp"

namespace gmflow {
namespace {

constexpr double kPi = 3.14159265358979323846;

void add(SuiteReport& rep, const std::string& name, double residual, double tol) {
  const bool pass = std::isfinite(residual) && residual <= tol;
  rep.checks.push_back({name, residual, tol, pass});
  rep.pass = rep.pass && pass;
}

RepSpace mixed_space(Group tag) {
  RepSpace V;
  V.blocks = {{IrrepLabel{tag, 0}, 2}, {IrrepLabel{tag, 1}, 1}, {IrrepLabel{tag, 2}, 1}};
  return V;
}

GeneratedGraph scene(const Manifold& M, int n, double rc, std::uint64_t seed, const RepSpace& V) {
  return gen_graph(M, n, rc, seed, V, InitRule::Random);
}

double stack_gap(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return g;
}

SuiteReport suite_casimir() {
  SuiteReport rep{"casimir", {}, true};
  double r3 = 0.0, r2 = 0.0;
  for (int l = 0; l <= 4; ++l) {
    const int d = 2 * l + 1;
    const Eigen::MatrixXd gap =
        casimir(IrrepLabel::so3(l)) - static_cast<double>(l * (l + 1)) * Eigen::MatrixXd::Identity(d, d);
    r3 = std::max(r3, gap.cwiseAbs().maxCoeff());
  }
  for (int m = 0; m <= 4; ++m) {
    const int d = m == 0 ? 1 : 2;
    const Eigen::MatrixXd gap =
        casimir(IrrepLabel::so2(m)) - static_cast<double>(m * m) * Eigen::MatrixXd::Identity(d, d);
    r2 = std::max(r2, gap.cwiseAbs().maxCoeff());
  }
  add(rep, "so3 casimir = l(l+1) I, l <= 4", r3, 1e-12);
  add(rep, "so2 casimir = m^2 I, m <= 4", r2, 1e-12);
  return rep;
}

SuiteReport suite_schur() {
  SuiteReport rep{"schur", {}, true};
  double mean3 = 0.0, mean2 = 0.0;
  for (int l = 1; l <= 4; ++l) {
    const QuadratureRule rule = haar_rule(Group::SO3, l);
    const Eigen::MatrixXd avg = integrate_over_group(
        rule, [&](const GroupElement& g) { return Eigen::MatrixXd(irrep_matrix(IrrepLabel::so3(l), g)); });
    mean3 = std::max(mean3, avg.cwiseAbs().maxCoeff());
  }
  for (int m = 1; m <= 4; ++m) {
    const QuadratureRule rule = haar_rule(Group::SO2, m);
    const Eigen::MatrixXd avg = integrate_over_group(
        rule, [&](const GroupElement& g) { return Eigen::MatrixXd(irrep_matrix(IrrepLabel::so2(m), g)); });
    mean2 = std::max(mean2, avg.cwiseAbs().maxCoeff());
  }
  add(rep, "so3 nontrivial irrep means vanish, l <= 4", mean3, 1e-10);
  add(rep, "so2 nontrivial irrep means vanish, m <= 4", mean2, 1e-10);

  double proj3 = 0.0;
  for (int l = 1; l <= 4; ++l) {
    const QuadratureRule rule = haar_rule(Group::SO3, 2 * l);
    const int d = 2 * l + 1;
    const Eigen::MatrixXd avg = integrate_over_group(rule, [&](const GroupElement& g) {
      return Eigen::MatrixXd(so3_character(l, g) * irrep_matrix(IrrepLabel::so3(l), inverse(g)));
    });
    proj3 = std::max(proj3, (avg - Eigen::MatrixXd::Identity(d, d) / d).cwiseAbs().maxCoeff());
  }
  add(rep, "so3 character projection = I/(2l+1), l <= 4", proj3, 1e-10);

  // complex-type SO(2) irreps: the same projection lands on the identity
  double proj2 = 0.0;
  for (int m = 1; m <= 4; ++m) {
    const QuadratureRule rule = haar_rule(Group::SO2, 2 * m);
    const Eigen::MatrixXd avg = integrate_over_group(rule, [&](const GroupElement& g) {
      return Eigen::MatrixXd(2.0 * std::cos(m * g.angle()) *
                             irrep_matrix(IrrepLabel::so2(m), inverse(g)));
    });
    proj2 = std::max(proj2, (avg - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff());
  }
  add(rep, "so2 character projection = I, m <= 4", proj2, 1e-10);
  return rep;
}

SuiteReport suite_semigroup() {
  SuiteReport rep{"semigroup", {}, true};
  const Manifold S2 = Manifold::sphere2();
  const Eigen::Vector3d zhat(0.0, 0.0, 1.0);

  // unit Haar mass transfers to the sphere: y = g zhat sweeps S^2 uniformly
  const QuadratureRule rule16 = haar_rule(Group::SO3, 16);
  Eigen::VectorXd x0(3);
  x0 << 0.3, -0.4, 0.85;
  x0.normalize();
  double mass_gap = 0.0;
  for (double t : {0.05, 0.3, 1.0}) {
    double mass = 0.0;
    for (std::size_t q = 0; q < rule16.nodes.size(); ++q) {
      const Eigen::Vector3d y = rule16.nodes[q].matrix() * zhat;
      mass += rule16.weights[q] * base_heat_kernel(S2, t, x0, y, 16) * 4.0 * kPi;
    }
    mass_gap = std::max(mass_gap, std::abs(mass - 1.0));
  }
  add(rep, "sphere heat kernel unit mass", mass_gap, 1e-8);

  // semigroup at L = 16: integrand band 32, rule certified to 32
  const QuadratureRule rule32 = haar_rule(Group::SO3, 32);
  const auto pts = sample_points(S2, 6, 17);
  const double pairs[3][2] = {{0.1, 0.2}, {0.25, 0.5}, {0.5, 1.0}};
  double semi_s2 = 0.0;
  for (const auto& st : pairs)
    for (int i = 0; i < 3; ++i) {
      const Eigen::VectorXd& x = pts[i];
      const Eigen::VectorXd& y = pts[i + 3];
      double conv = 0.0;
      for (std::size_t q = 0; q < rule32.nodes.size(); ++q) {
        const Eigen::Vector3d m = rule32.nodes[q].matrix() * zhat;
        conv += rule32.weights[q] * base_heat_kernel(S2, st[0], x, m, 16) *
                base_heat_kernel(S2, st[1], m, y, 16) * 4.0 * kPi;
      }
      semi_s2 = std::max(semi_s2, std::abs(conv - base_heat_kernel(S2, st[0] + st[1], x, y, 16)));
    }
  add(rep, "sphere semigroup, three (s, t) pairs at L = 16", semi_s2, 1e-8);

  const Manifold S1 = Manifold::circle();
  const QuadratureRule c32 = haar_rule(Group::SO2, 32);
  double semi_s1 = 0.0;
  for (const auto& st : pairs)
    for (double a : {0.3, 2.1, 4.4}) {
      Eigen::VectorXd x(1), y(1), m(1);
      x[0] = a;
      y[0] = std::fmod(2.0 * a + 0.7, 2.0 * kPi);
      double conv = 0.0;
      for (std::size_t q = 0; q < c32.nodes.size(); ++q) {
        m[0] = c32.nodes[q].angle();
        conv += c32.weights[q] * base_heat_kernel(S1, st[0], x, m, 16) *
                base_heat_kernel(S1, st[1], m, y, 16) * 2.0 * kPi;
      }
      semi_s1 = std::max(semi_s1, std::abs(conv - base_heat_kernel(S1, st[0] + st[1], x, y, 16)));
    }
  add(rep, "circle semigroup, three (s, t) pairs at L = 16", semi_s1, 1e-8);

  // euclidean gaussian factorizes over coordinates
  double gauss = 0.0;
  Rng rng(29);
  for (int d : {2, 3}) {
    const Manifold E = Manifold::euclidean(d);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd x(d), y(d);
      for (int k = 0; k < d; ++k) {
        x[k] = rng.uniform(-1.0, 1.0);
        y[k] = rng.uniform(-1.0, 1.0);
      }
      const double t = rng.uniform(0.1, 1.5);
      double ref = 1.0;
      for (int k = 0; k < d; ++k)
        ref *= std::exp(-(x[k] - y[k]) * (x[k] - y[k]) / (4.0 * t)) / std::sqrt(4.0 * kPi * t);
      const double got = base_heat_kernel(E, t, x, y, 0);
      gauss = std::max(gauss, std::abs(got - ref) / ref);
    }
  }
  add(rep, "gaussian closed form on R^d", gauss, 1e-14);

  // e^{tL} = e^{-t Cas} e^{t Dirichlet} on assembled operators, mixed charts
  const Atlas as = Atlas::standard(S2);
  GeneratedGraph gs = scene(S2, 8, 1.3, 3, mixed_space(Group::SO2));
  EnergyConfig cs;
  cs.t0 = 0.3;
  const EdgeWeights ws = edge_weights(gs.graph, cs);
  GeneralizedLaplacian Ls(as, gs.graph, ws, gs.field.V, gs.field.chart);
  const double t = 0.7;
  const Eigen::MatrixXd whole = (t * Ls.dense()).exp();
  const Eigen::MatrixXd casfirst = (t * Ls.dense_dirichlet()).exp() * (-t * Ls.dense_casimir()).exp();
  const Eigen::MatrixXd caslast = (-t * Ls.dense_casimir()).exp() * (t * Ls.dense_dirichlet()).exp();
  const double fact = std::max((whole - casfirst).norm(), (whole - caslast).norm()) / whole.norm();
  add(rep, "propagator factorization on graph operators", fact, 1e-12);
  return rep;
}

SuiteReport suite_equivariance() {
  SuiteReport rep{"equivariance", {}, true};
  struct Config {
    const char* name;
    Manifold M;
  };
  const Config cfgs[] = {{"euclidean2", Manifold::euclidean(2)},
                         {"euclidean3", Manifold::euclidean(3)},
                         {"sphere2", Manifold::sphere2()}};
  for (const auto& c : cfgs) {
    const Group tag = structure_group(c.M);
    const RepSpace V = mixed_space(tag);
    const Atlas atlas = Atlas::standard(c.M);
    GeneratedGraph sc = scene(c.M, 10, 1.1, 42, V);
    KernelSpec spec;
    spec.t = 0.5;
    spec.L_base = 8;
    spec.L_grp = 2;

    EquivOptions opt;
    opt.samples = 20;
    opt.seed = 19;
    opt.tol = 1e-8;

    MessageConfig pw;
    pw.t = spec.t;
    pw.n = 1;
    pw.rule = haar_rule(tag, spec.L_grp + V.max_degree());
    const FieldMap pair_map = [&](const GeometricGraph&, const FeatureField& f) {
      return pairwise_message(atlas, f, spec, pw).values;
    };
    add(rep, std::string(c.name) + " pairwise message",
        check_equivariance(pair_map, V, sc.graph, sc.field, atlas, opt).max_deviation, 1e-8);

    MessageConfig ho;
    ho.t = spec.t;
    ho.n = 2;
    ho.mode = ProductMode::ScalarChannels;
    ho.channel_tuples = {{0, 1}, {1, 1}};
    ho.rule = haar_rule(tag, 2 * spec.L_grp);
    const RepSpace Vsc{{{IrrepLabel{tag, 0}, 2}}};
    const FieldMap sc_map = [&](const GeometricGraph&, const FeatureField& f) {
      return higher_order_message(atlas, f, spec, ho).values;
    };
    add(rep, std::string(c.name) + " scalar product message",
        check_equivariance(sc_map, Vsc, sc.graph, sc.field, atlas, opt).max_deviation, 1e-8);

    if (tag == Group::SO3) {
      MessageConfig tc;
      tc.t = spec.t;
      tc.n = 2;
      tc.mode = ProductMode::TensorContraction;
      tc.lambda_out = IrrepLabel::so3(1);
      tc.selectors = {2, 3};
      tc.rule = haar_rule(tag, 2 * spec.L_grp + 1);
      const RepSpace Vtc{{{tc.lambda_out, 1}}};
      const FieldMap tc_map = [&](const GeometricGraph&, const FeatureField& f) {
        return higher_order_message(atlas, f, spec, tc).values;
      };
      add(rep, std::string(c.name) + " tensor contraction message",
          check_equivariance(tc_map, Vtc, sc.graph, sc.field, atlas, opt).max_deviation, 1e-8);
    }

    GatedUpdate gate;
    gate.w = Eigen::VectorXd(2);
    gate.w << 0.3, -0.2;
    gate.bias = 0.1;
    const FieldMap upd_map = [&](const GeometricGraph&, const FeatureField& f) {
      return update(f, pairwise_message(atlas, f, spec, pw), gate).values;
    };
    add(rep, std::string(c.name) + " gated update",
        check_equivariance(upd_map, V, sc.graph, sc.field, atlas, opt).max_deviation, 1e-8);

    const std::vector<double> rw = {0.7, -1.2, 0.0, 0.0};
    const RepSpace Vro{{{IrrepLabel{tag, 0}, 1}}};
    const FieldMap ro_map = [&](const GeometricGraph&, const FeatureField& f) {
      const ReadoutResult r = readout(f, rw);
      std::vector<Eigen::VectorXd> out(r.per_node.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = Eigen::VectorXd(1);
        out[i][0] = r.per_node[i];
      }
      return out;
    };
    add(rep, std::string(c.name) + " readout invariance",
        check_equivariance(ro_map, Vro, sc.graph, sc.field, atlas, opt).max_deviation, 1e-8);
  }
  return rep;
}

SuiteReport suite_mace() {
  SuiteReport rep{"mace", {}, true};
  const Manifold E3 = Manifold::euclidean(3);
  const Atlas atlas = Atlas::standard(E3);
  RepSpace V;
  V.blocks = {{IrrepLabel::so3(0), 1}, {IrrepLabel::so3(1), 1}, {IrrepLabel::so3(2), 1}};
  KernelSpec spec;
  spec.t = 0.6;
  spec.L_base = 8;
  spec.L_grp = 2;

  const auto rel_gap = [](const MessageResult& a, const MessageResult& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      num = std::max(num, (a.values[i] - b.values[i]).cwiseAbs().maxCoeff());
      den = std::max(den, a.values[i].cwiseAbs().maxCoeff());
    }
    return num / std::max(den, 1e-300);
  };

  double first = 0.0, second_tc = 0.0, second_sc = 0.0;
  for (std::uint64_t seed : {11u, 12u}) {
    GeneratedGraph sc = scene(E3, 8, 1.1, seed, V);
    for (int lam = 0; lam <= 2; ++lam) {
      MessageConfig mc;
      mc.t = spec.t;
      mc.n = 1;
      mc.mode = ProductMode::TensorContraction;
      mc.lambda_out = IrrepLabel::so3(lam);
      mc.selectors = {lam};  // channel index equals its degree in this rep
      mc.rule = haar_rule(Group::SO3, spec.L_grp + lam);
      first = std::max(first, rel_gap(higher_order_message(atlas, sc.field, spec, mc),
                                      mace_reference_message(sc.field, spec, mc)));
    }
    const int combos[3][3] = {{1, 1, 0}, {1, 1, 2}, {1, 2, 1}};
    for (const auto& cb : combos) {
      MessageConfig mc;
      mc.t = spec.t;
      mc.n = 2;
      mc.mode = ProductMode::TensorContraction;
      mc.lambda_out = IrrepLabel::so3(cb[2]);
      mc.selectors = {cb[0], cb[1]};
      mc.rule = haar_rule(Group::SO3, 2 * spec.L_grp + cb[2]);
      second_tc = std::max(second_tc, rel_gap(higher_order_message(atlas, sc.field, spec, mc),
                                              mace_reference_message(sc.field, spec, mc)));
    }
    MessageConfig ms;
    ms.t = spec.t;
    ms.n = 2;
    ms.mode = ProductMode::ScalarChannels;
    ms.channel_tuples = {{0, 0}};
    ms.rule = haar_rule(Group::SO3, 2 * spec.L_grp);
    second_sc = std::max(second_sc, rel_gap(higher_order_message(atlas, sc.field, spec, ms),
                                            mace_reference_message(sc.field, spec, ms)));
  }
  add(rep, "order 1: quadrature path = clebsch-gordan path", first, 1e-8);
  add(rep, "order 2 tensor: quadrature path = clebsch-gordan path", second_tc, 1e-8);
  add(rep, "order 2 scalar: quadrature path = clebsch-gordan path", second_sc, 1e-8);
  return rep;
}

SuiteReport suite_energy() {
  SuiteReport rep{"energy", {}, true};
  const Manifold E3 = Manifold::euclidean(3);
  const Atlas atlas = Atlas::standard(E3);
  RepSpace V;
  V.blocks = {{IrrepLabel::so3(0), 1}, {IrrepLabel::so3(1), 1}};

  double worst_rise = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneratedGraph sc = scene(E3, 8, 1.1, seed, V);
    EnergyConfig cfg;
    cfg.t0 = 0.3;
    const EdgeWeights w = edge_weights(sc.graph, cfg);
    const double dt = stable_dt(sc.graph, w, V);
    FeatureField f = sc.field;
    double prev = polyakov_energy(atlas, f, w, cfg);
    for (int s = 0; s < 100; ++s) {
      f = euler_step(atlas, f, dt, w);
      const double cur = polyakov_energy(atlas, f, w, cfg);
      worst_rise = std::max(worst_rise, cur - prev);
      prev = cur;
    }
  }
  add(rep, "energy non-increasing, 20 graphs x 100 euler steps", std::max(worst_rise, 0.0), 1e-12);

  GeneratedGraph sc = scene(E3, 5, 0.9, 21, V);
  EnergyConfig cfg;
  cfg.t0 = 0.3;
  const EdgeWeights w = edge_weights(sc.graph, cfg);
  const FeatureField exact = propagate_exact(atlas, sc.field, 0.5, w);
  double errs[3];
  const double dts[3] = {1e-2, 5e-3, 2.5e-3};
  for (int k = 0; k < 3; ++k) {
    FeatureField f = sc.field;
    const int steps = static_cast<int>(std::lround(0.5 / dts[k]));
    for (int s = 0; s < steps; ++s) f = euler_step(atlas, f, dts[k], w);
    double e = 0.0;
    for (int i = 0; i < sc.graph.n(); ++i) e = std::max(e, (f.values[i] - exact.values[i]).norm());
    errs[k] = e;
  }
  const double rate1 = std::log2(errs[0] / errs[1]);
  const double rate2 = std::log2(errs[1] / errs[2]);
  add(rep, "euler-to-exact convergence order 1.0 +- 0.1",
      std::max(std::abs(rate1 - 1.0), std::abs(rate2 - 1.0)), 0.1);
  return rep;
}

SuiteReport suite_beltrami() {
  SuiteReport rep{"beltrami", {}, true};
  const Manifold E3 = Manifold::euclidean(3);
  const Atlas atlas = Atlas::standard(E3);
  RepSpace Vs;
  Vs.blocks = {{IrrepLabel::so3(0), 2}};
  GeneratedGraph sc = scene(E3, 8, 1.1, 7, Vs);
  const EdgeWeights w = unit_weights(sc.graph);
  const double dt = 0.2 * stable_dt(sc.graph, w, Vs);
  const Attention one = [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return 1.0; };
  const FeatureField a = beltrami_step(sc.field, one, dt);
  const FeatureField b = euler_step(atlas, sc.field, dt, w);
  add(rep, "constant attention coincides with the scalar heat step (bitwise)",
      stack_gap(a.values, b.values), 0.0);

  // dt = 1 on a 3-node path, h = (1, 2, 4): update h_i + sum_j (h_j - h_i)
  std::vector<Eigen::VectorXd> pos(3, Eigen::VectorXd::Zero(3));
  pos[1][0] = 1.0;
  pos[2][0] = 2.0;
  GeometricGraph path = build_graph(E3, pos, 1.5);
  RepSpace V1;
  V1.blocks = {{IrrepLabel::so3(0), 1}};
  FeatureField h = make_field(path, atlas, V1);
  h.values[0][0] = 1.0;
  h.values[1][0] = 2.0;
  h.values[2][0] = 4.0;
  const FeatureField out = beltrami_step(h, one, 1.0);
  const double hand[3] = {2.0, 3.0, 2.0};
  double gap = 0.0;
  for (int i = 0; i < 3; ++i) gap = std::max(gap, std::abs(out.values[i][0] - hand[i]));
  add(rep, "dt = 1 reproduces the hand-checked 3-node update", gap, 0.0);
  return rep;
}

SuiteReport suite_bundle() {
  SuiteReport rep{"bundle", {}, true};
  const Manifold S2 = Manifold::sphere2();
  const Atlas a = Atlas::standard(S2);

  double cocycle = 0.0;
  const auto pts = sample_points(S2, 220, 5);
  int used = 0;
  for (const auto& p : pts) {
    if (used == 100) break;
    if (std::abs(p[2]) > 0.97) continue;
    ++used;
    for (int c1 = 0; c1 < 2; ++c1)
      for (int c2 = 0; c2 < 2; ++c2)
        for (int c3 = 0; c3 < 2; ++c3) {
          const GroupElement loop =
              compose(transition_function(a, c3, c1, p),
                      compose(transition_function(a, c2, c3, p), transition_function(a, c1, c2, p)));
          cocycle = std::max(cocycle, element_distance(loop, GroupElement::identity(Group::SO2)));
        }
  }
  add(rep, "atlas cocycle on 100 overlap points", cocycle, 1e-10);

  const int N = 360;
  const auto equator = [](double phi) {
    Eigen::VectorXd x(3);
    x << std::cos(phi), std::sin(phi), 0.0;
    return x;
  };
  double total = 0.0;
  double prev = transition_function(a, 1, 0, equator(0.0)).angle();
  for (int k = 1; k <= N; ++k) {
    const double cur = transition_function(a, 1, 0, equator(2.0 * kPi * k / N)).angle();
    double d = cur - prev;
    while (d > kPi) d -= 2.0 * kPi;
    while (d < -kPi) d += 2.0 * kPi;
    total += d;
    prev = cur;
  }
  const double winding = total / (2.0 * kPi);
  add(rep, "equator winding south-to-north = 2 (exact integer)",
      std::llround(winding) == 2 ? std::abs(winding - 2.0) : 1.0, 1e-10);

  // gamma round trip: equivariant h from the tangential z field
  const RepSpace V = mixed_space(Group::SO2);
  GeometricGraph g = build_graph(S2, sample_points(S2, 12, 31), 1.4);
  const auto h = [&](const FiberPoint& p) {
    const Eigen::Vector3d x(p.x);
    const Eigen::MatrixXd E = a.frame(p.chart, p.x);
    const double c = std::cos(p.frame.angle()), s = std::sin(p.frame.angle());
    Eigen::Matrix2d R;
    R << c, -s, s, c;
    const Eigen::Vector3d zt = Eigen::Vector3d(0, 0, 1) - x.z() * x;
    const Eigen::Vector2d w = (E * R).transpose() * zt;
    Eigen::VectorXd out(6);
    out << x.z(), 2.0 * x.z(), w[0], w[1], w[0] * w[0] - w[1] * w[1], 2.0 * w[0] * w[1];
    return out;
  };
  const FeatureField f = from_equivariant(g, a, V, h);
  Rng rng(88);
  double trip = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int i = rng.index(g.n());
    int c = rng.index(2);
    if (!a.contains(c, g.pos[i])) c = 1 - c;
    const FiberPoint p{g.pos[i], GroupElement::so2(rng.uniform(0.0, 2.0 * kPi)), c};
    trip = std::max(trip, (evaluate_equivariant(a, f, i, p) - h(p)).norm());
  }
  add(rep, "gamma round trips on 50 random fibers", trip, 1e-10);
  return rep;
}

SuiteReport suite_determinism() {
  SuiteReport rep{"determinism", {}, true};
  const Manifold E3 = Manifold::euclidean(3);
  const Atlas atlas = Atlas::standard(E3);
  const RepSpace V = mixed_space(Group::SO3);
  GeneratedGraph sc = scene(E3, 10, 1.1, 33, V);
  KernelSpec spec;
  spec.t = 0.5;
  spec.L_base = 8;
  spec.L_grp = 2;
  MessageConfig mc;
  mc.t = spec.t;
  mc.n = 2;
  mc.mode = ProductMode::TensorContraction;
  mc.lambda_out = IrrepLabel::so3(1);
  mc.selectors = {2, 3};
  mc.rule = haar_rule(Group::SO3, 2 * spec.L_grp + 1);

  const int cap = thread_cap();
  set_thread_cap(1);
  const MessageResult m1 = higher_order_message(atlas, sc.field, spec, mc);
  set_thread_cap(8);
  const MessageResult m8 = higher_order_message(atlas, sc.field, spec, mc);
  set_thread_cap(cap);
  add(rep, "message pass bitwise across 1 vs 8 worker threads", stack_gap(m1.values, m8.values), 0.0);

  GeneratedGraph g1 = gen_graph(E3, 12, 1.1, 5, V, InitRule::Random);
  GeneratedGraph g2 = gen_graph(E3, 12, 1.1, 5, V, InitRule::Random);
  add(rep, "seeded generation byte-identical across runs",
      graph_to_json(g1.graph, g1.field) == graph_to_json(g2.graph, g2.field) ? 0.0 : 1.0, 0.0);
  return rep;
}

}  // namespace

const std::vector<std::string>& selfcheck_suites() {
  static const std::vector<std::string> names = {"casimir", "schur",    "semigroup",
                                                 "equivariance", "mace", "energy",
                                                 "beltrami", "bundle",  "determinism"};
  return names;
}

SuiteReport run_selfcheck_suite(const std::string& suite) {
  if (suite == "casimir") return suite_casimir();
  if (suite == "schur") return suite_schur();
  if (suite == "semigroup") return suite_semigroup();
  if (suite == "equivariance") return suite_equivariance();
  if (suite == "mace") return suite_mace();
  if (suite == "energy") return suite_energy();
  if (suite == "beltrami") return suite_beltrami();
  if (suite == "bundle") return suite_bundle();
  if (suite == "determinism") return suite_determinism();
  std::string names;
  for (const auto& n : selfcheck_suites()) names += (names.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown selfcheck suite \"" + suite + "\" (" + names + ", all)");
}

std::vector<SuiteReport> run_selfcheck(const std::string& suite) {
  std::vector<SuiteReport> out;
  if (suite == "all") {
    for (const auto& name : selfcheck_suites()) out.push_back(run_selfcheck_suite(name));
  } else {
    out.push_back(run_selfcheck_suite(suite));
  }
  return out;
}

std::string selfcheck_report_json(const std::vector<SuiteReport>& reports) {
  nlohmann::ordered_json doc;
  doc["version"] = kVersion;
  bool all_pass = true;
  nlohmann::ordered_json suites = nlohmann::ordered_json::array();
  for (const auto& rep : reports) {
    nlohmann::ordered_json s;
    s["suite"] = rep.suite;
    s["pass"] = rep.pass;
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& c : rep.checks) {
      nlohmann::ordered_json e;
      e["name"] = c.name;
      e["residual"] = c.residual;
      e["tolerance"] = c.tolerance;
      e["pass"] = c.pass;
      checks.push_back(std::move(e));
    }
    s["checks"] = std::move(checks);
    suites.push_back(std::move(s));
    all_pass = all_pass && rep.pass;
  }
  doc["suites"] = std::move(suites);
  doc["pass"] = all_pass;
  return doc.dump(2) + "\n";
}

}  // namespace gmflow
