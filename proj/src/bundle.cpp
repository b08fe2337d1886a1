#include "gmflow/bundle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace gmflow {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kPoleExclusion = 1e-12;

// stereographic chart data on S^2. North projects from the south pole:
// u = (x, y)/(1+z); south uses the conjugated map u = (x, -y)/(1-z) so both
// coordinate frames are positively oriented against the outward normal.
Eigen::Matrix<double, 3, 2> sphere_frame(int chart, const Eigen::Vector3d& p) {
  const double x = p.x(), y = p.y(), z = p.z();
  Eigen::Vector2d u;
  Eigen::Vector3d d1, d2;
  if (chart == 0) {
    u = Eigen::Vector2d(x, y) / (1.0 + z);
    const double s = 1.0 + u.squaredNorm();
    d1 = {2.0 / s - 4.0 * u[0] * u[0] / (s * s), -4.0 * u[0] * u[1] / (s * s), -4.0 * u[0] / (s * s)};
    d2 = {-4.0 * u[0] * u[1] / (s * s), 2.0 / s - 4.0 * u[1] * u[1] / (s * s), -4.0 * u[1] / (s * s)};
  } else {
    u = Eigen::Vector2d(x, -y) / (1.0 - z);
    const double s = 1.0 + u.squaredNorm();
    d1 = {2.0 / s - 4.0 * u[0] * u[0] / (s * s), 4.0 * u[0] * u[1] / (s * s), 4.0 * u[0] / (s * s)};
    d2 = {-4.0 * u[0] * u[1] / (s * s), -2.0 / s + 4.0 * u[1] * u[1] / (s * s), 4.0 * u[1] / (s * s)};
  }
  Eigen::Vector3d e1 = d1.normalized();
  Eigen::Vector3d e2 = (d2 - d2.dot(e1) * e1).normalized();
  Eigen::Matrix<double, 3, 2> F;
  F.col(0) = e1;
  F.col(1) = e2;
  return F;
}

}  // namespace

Atlas Atlas::standard(const Manifold& M) { return Atlas(M); }

int Atlas::num_charts() const { return M_.kind == Manifold::Kind::Sphere2 ? 2 : 1; }

bool Atlas::contains(int chart, const Eigen::VectorXd& x) const {
  if (chart < 0 || chart >= num_charts()) return false;
  validate_point(M_, x);
  if (M_.kind != Manifold::Kind::Sphere2) return true;
  if (chart == 0) return x[2] > -1.0 + kPoleExclusion;  // excludes the south pole
  return x[2] < 1.0 - kPoleExclusion;                   // excludes the north pole
}

Eigen::MatrixXd Atlas::frame(int chart, const Eigen::VectorXd& x) const {
  if (chart < 0 || chart >= num_charts()) throw std::domain_error("atlas: no such chart");
  if (!contains(chart, x)) throw std::domain_error("atlas: point outside chart");
  if (M_.kind == Manifold::Kind::Sphere2) return sphere_frame(chart, Eigen::Vector3d(x));
  const int d = M_.point_dim();
  return Eigen::MatrixXd::Identity(d, d);
}

int Atlas::assign_chart(const Eigen::VectorXd& x) const {
  if (M_.kind != Manifold::Kind::Sphere2) {
    validate_point(M_, x);
    return 0;
  }
  // hemisphere split, equator ties go north: keeps every neighbor within
  // r_c < pi/2 of a node inside that node's chart
  validate_point(M_, x);
  return x[2] >= 0.0 ? 0 : 1;
}

GroupElement transition_function(const Atlas& atlas, int chartA, int chartB,
                                 const Eigen::VectorXd& x) {
  const Group tag = structure_group(atlas.manifold());
  if (chartA < 0 || chartA >= atlas.num_charts() || chartB < 0 || chartB >= atlas.num_charts())
    throw std::domain_error("transition_function: no such chart");
  if (!atlas.contains(chartA, x) || !atlas.contains(chartB, x))
    throw std::domain_error("transition_function: point outside chart overlap");
  if (chartA == chartB) return GroupElement::identity(tag);

  // Sphere2 is the only multi-chart atlas: compare the two frames
  const Eigen::MatrixXd FA = atlas.frame(chartA, x);
  const Eigen::MatrixXd FB = atlas.frame(chartB, x);
  const Eigen::Matrix2d Mrot = FB.transpose() * FA;
  if ((Mrot.transpose() * Mrot - Eigen::Matrix2d::Identity()).norm() > 1e-8 ||
      Mrot.determinant() < 0)
    throw std::domain_error("transition_function: frames are not related by a rotation");
  return GroupElement::so2(std::atan2(Mrot(1, 0), Mrot(0, 0)));
}

FeatureField make_field(const GeometricGraph& graph, const Atlas& atlas, const RepSpace& V) {
  FeatureField f;
  f.graph = &graph;
  f.V = V;
  f.values.assign(graph.n(), Eigen::VectorXd::Zero(V.dim()));
  f.chart.resize(graph.n());
  for (int i = 0; i < graph.n(); ++i) f.chart[i] = atlas.assign_chart(graph.pos[i]);
  return f;
}

FeatureField gauge_transform(const Atlas& atlas, const FeatureField& f, int node, int target_chart) {
  if (node < 0 || node >= static_cast<int>(f.values.size()))
    throw std::invalid_argument("gauge_transform: node out of range");
  if (!atlas.contains(target_chart, f.graph->pos[node]))
    throw std::domain_error("gauge_transform: node outside target chart");
  FeatureField out = f;
  if (target_chart == f.chart[node]) return out;
  const GroupElement g = transition_function(atlas, f.chart[node], target_chart, f.graph->pos[node]);
  out.values[node] = rep_apply(f.V, g, f.values[node]);
  out.chart[node] = target_chart;
  return out;
}

Eigen::VectorXd evaluate_equivariant(const Atlas& atlas, const FeatureField& f, int node,
                                     const FiberPoint& p) {
  if (node < 0 || node >= static_cast<int>(f.values.size()))
    throw std::invalid_argument("evaluate_equivariant: node out of range");
  if ((p.x - f.graph->pos[node]).norm() > 1e-12)
    throw std::invalid_argument("evaluate_equivariant: fiber base point differs from node position");
  // vector in the gauge of p's chart, then undo the frame offset
  Eigen::VectorXd v = f.values[node];
  if (p.chart != f.chart[node]) {
    const GroupElement g = transition_function(atlas, f.chart[node], p.chart, f.graph->pos[node]);
    v = rep_apply(f.V, g, v);
  }
  return rep_apply(f.V, inverse(p.frame), v);
}

FeatureField from_equivariant(const GeometricGraph& graph, const Atlas& atlas, const RepSpace& V,
                              const std::function<Eigen::VectorXd(const FiberPoint&)>& h,
                              const std::vector<int>& chart_choice) {
  if (!chart_choice.empty() && static_cast<int>(chart_choice.size()) != graph.n())
    throw std::invalid_argument("from_equivariant: chart list does not match node count");
  FeatureField f = make_field(graph, atlas, V);
  const Group tag = structure_group(graph.M);
  for (int i = 0; i < graph.n(); ++i) {
    if (!chart_choice.empty()) {
      if (!atlas.contains(chart_choice[i], graph.pos[i]))
        throw std::domain_error("from_equivariant: node outside chosen chart");
      f.chart[i] = chart_choice[i];
    }
    const FiberPoint ref{graph.pos[i], GroupElement::identity(tag), f.chart[i]};
    Eigen::VectorXd v = h(ref);
    if (v.size() != V.dim()) throw std::invalid_argument("from_equivariant: h returned wrong dimension");
    f.values[i] = std::move(v);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Global isometries and the equivariance harness

GlobalIsometry sample_isometry(const Manifold& M, Rng& rng, bool translations) {
  GlobalIsometry iso;
  iso.M = M;
  switch (M.kind) {
    case Manifold::Kind::Euclidean: {
      if (M.d == 2) {
        const double a = rng.uniform(0.0, 2.0 * kPi);
        iso.Q = Eigen::Matrix2d{{std::cos(a), -std::sin(a)}, {std::sin(a), std::cos(a)}};
      } else {
        const double alpha = rng.uniform(0.0, 2.0 * kPi);
        const double beta = std::acos(rng.uniform(-1.0, 1.0));
        const double gamma = rng.uniform(0.0, 2.0 * kPi);
        iso.Q = GroupElement::so3_euler_zyz(alpha, beta, gamma).matrix();
      }
      iso.tau = Eigen::VectorXd::Zero(M.d);
      if (translations)
        for (int k = 0; k < M.d; ++k) iso.tau[k] = rng.uniform(-0.5, 0.5);
      break;
    }
    case Manifold::Kind::Sphere2:
    case Manifold::Kind::Circle:
      iso.psi = rng.uniform(0.0, 2.0 * kPi);
      break;
  }
  return iso;
}

Eigen::VectorXd apply_isometry(const GlobalIsometry& iso, const Eigen::VectorXd& x) {
  switch (iso.M.kind) {
    case Manifold::Kind::Euclidean:
      return iso.Q * x + iso.tau;
    case Manifold::Kind::Sphere2: {
      const double c = std::cos(iso.psi), s = std::sin(iso.psi);
      Eigen::Vector3d r(c * x[0] - s * x[1], s * x[0] + c * x[1], x[2]);
      return Eigen::VectorXd(r.normalized());
    }
    case Manifold::Kind::Circle: {
      Eigen::VectorXd r(1);
      r[0] = std::fmod(x[0] + iso.psi, 2.0 * kPi);
      if (r[0] < 0) r[0] += 2.0 * kPi;
      return r;
    }
  }
  return x;
}

GroupElement induced_gauge(const Atlas& atlas, const GlobalIsometry& iso,
                           const Eigen::VectorXd& x, int chart) {
  switch (iso.M.kind) {
    case Manifold::Kind::Euclidean:
      if (iso.M.d == 3) return GroupElement::so3(iso.Q);
      return GroupElement::so2(std::atan2(iso.Q(1, 0), iso.Q(0, 0)));
    case Manifold::Kind::Circle:
      return GroupElement::identity(Group::SO2);
    case Manifold::Kind::Sphere2: {
      // compare the pushed-forward frame with the frame at the image point
      const Eigen::VectorXd xn = apply_isometry(iso, x);
      const Eigen::MatrixXd Fold = atlas.frame(chart, x);
      const Eigen::MatrixXd Fnew = atlas.frame(chart, xn);
      Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
      const double c = std::cos(iso.psi), s = std::sin(iso.psi);
      R(0, 0) = c; R(0, 1) = -s; R(1, 0) = s; R(1, 1) = c;
      const Eigen::Matrix2d Mrot = Fnew.transpose() * (R * Fold);
      return GroupElement::so2(std::atan2(Mrot(1, 0), Mrot(0, 0)));
    }
  }
  return GroupElement::identity(Group::SO2);
}

TransformedScene transform_scene(const Atlas& atlas, const GeometricGraph& graph,
                                 const FeatureField& f, const GlobalIsometry& iso) {
  TransformedScene out;
  std::vector<Eigen::VectorXd> moved(graph.n());
  for (int i = 0; i < graph.n(); ++i) moved[i] = apply_isometry(iso, graph.pos[i]);
  out.graph = build_graph(graph.M, moved, graph.r_c);
  out.field.graph = &out.graph;
  out.field.V = f.V;
  out.field.chart = f.chart;
  out.field.values.resize(graph.n());
  out.gauges.reserve(graph.n());
  for (int i = 0; i < graph.n(); ++i) {
    const GroupElement g = induced_gauge(atlas, iso, graph.pos[i], f.chart[i]);
    out.gauges.push_back(g);
    out.field.values[i] = rep_apply(f.V, g, f.values[i]);
  }
  return out;
}

EquivarianceReport check_equivariance(const FieldMap& F, const RepSpace& V_out,
                                      const GeometricGraph& graph, const FeatureField& f,
                                      const Atlas& atlas, const EquivOptions& opt) {
  Rng rng(opt.seed);
  const std::vector<Eigen::VectorXd> base = F(graph, f);
  if (static_cast<int>(base.size()) != graph.n())
    throw std::invalid_argument("check_equivariance: F must return one vector per node");

  EquivarianceReport rep;
  for (int s = 0; s < opt.samples; ++s) {
    const GlobalIsometry iso = sample_isometry(graph.M, rng, opt.translations);
    const TransformedScene scene = transform_scene(atlas, graph, f, iso);
    const std::vector<Eigen::VectorXd> moved = F(scene.graph, scene.field);
    for (int i = 0; i < graph.n(); ++i) {
      const Eigen::VectorXd expect = rep_apply(V_out, scene.gauges[i], base[i]);
      const double dev = (moved[i] - expect).norm() / (1.0 + base[i].norm());
      rep.max_deviation = std::max(rep.max_deviation, dev);
    }
  }
  rep.pass = rep.max_deviation <= opt.tol;
  return rep;
}

}  // namespace gmflow
