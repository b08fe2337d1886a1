#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "gmflow/graph.hpp"
#include "gmflow/group.hpp"
#include "gmflow/manifold.hpp"
#include "gmflow/util.hpp"

namespace gmflow {

// Chart system with frame assignments. Euclidean(d) and Circle carry a
// single global chart with the standard frame; Sphere2 carries the two
// stereographic charts (0: north, excludes the south pole; 1: south,
// excludes the north pole) with frames from the orthonormalized coordinate
// bases, both positively oriented against the outward normal so transitions
// land in SO(2).
class Atlas {
public:
  static Atlas standard(const Manifold& M);

  const Manifold& manifold() const { return M_; }
  int num_charts() const;
  bool contains(int chart, const Eigen::VectorXd& x) const;
  // columns span the tangent space at x in chart order (Sphere2: 3x2;
  // Euclidean(d): d x d identity; Circle: 1x1)
  Eigen::MatrixXd frame(int chart, const Eigen::VectorXd& x) const;
  // deterministic chart assignment: Sphere2 points go to the chart of the
  // nearer pole (equator ties north), so a node's chart covers its whole
  // r_c < pi/2 neighborhood; single-chart manifolds return 0
  int assign_chart(const Eigen::VectorXd& x) const;

private:
  explicit Atlas(const Manifold& M) : M_(M) {}
  Manifold M_;
};

// g^{BA}_x: structure-group element turning chart-A frame coordinates into
// chart-B frame coordinates at x, extracted from the two frames.
GroupElement transition_function(const Atlas& atlas, int chartA, int chartB,
                                 const Eigen::VectorXd& x);

// Per-node feature vectors over a graph, each expressed in the gauge of a
// recorded chart. Value type: transforms return new fields.
struct FeatureField {
  const GeometricGraph* graph = nullptr;
  RepSpace V;
  std::vector<Eigen::VectorXd> values;
  std::vector<int> chart;
};

// zero field in the default chart assignment
FeatureField make_field(const GeometricGraph& graph, const Atlas& atlas, const RepSpace& V);

FeatureField gauge_transform(const Atlas& atlas, const FeatureField& f, int node, int target_chart);

// h(p_ref(chart) * frame) = rho(frame)^{-1} applied to the stored vector in
// that chart; independent of the chart the field currently stores.
Eigen::VectorXd evaluate_equivariant(const Atlas& atlas, const FeatureField& f, int node,
                                     const FiberPoint& p);

// Samples h at each node's chart reference frame. chart_choice: optional
// per-node chart ids (default assignment when empty).
FeatureField from_equivariant(const GeometricGraph& graph, const Atlas& atlas, const RepSpace& V,
                              const std::function<Eigen::VectorXd(const FiberPoint&)>& h,
                              const std::vector<int>& chart_choice = {});

// Global isometry whose differential lands in the structure group:
// Euclidean(d): x -> Q x + tau; Sphere2: rotation about z by psi (the
// subgroup the chartwise product kernel is invariant under); Circle: angle
// shift by psi.
struct GlobalIsometry {
  Manifold M;
  Eigen::MatrixXd Q;    // Euclidean only
  Eigen::VectorXd tau;  // Euclidean only
  double psi = 0.0;     // Sphere2 / Circle
};

GlobalIsometry sample_isometry(const Manifold& M, Rng& rng, bool translations);
Eigen::VectorXd apply_isometry(const GlobalIsometry& iso, const Eigen::VectorXd& x);

// Gauge element by which features at x (expressed in `chart`) transform
// under the isometry: comparison of the pushed-forward frame with the frame
// at the image point. Constant on Euclidean space, per-node on Sphere2.
GroupElement induced_gauge(const Atlas& atlas, const GlobalIsometry& iso,
                           const Eigen::VectorXd& x, int chart);

// Applies the isometry to a whole scene: rebuilt graph (same edges, moved
// points) and per-node rho_V-transformed features in unchanged chart ids.
struct TransformedScene {
  GeometricGraph graph;
  FeatureField field;
  std::vector<GroupElement> gauges;  // per node
};
TransformedScene transform_scene(const Atlas& atlas, const GeometricGraph& graph,
                                 const FeatureField& f, const GlobalIsometry& iso);

struct EquivOptions {
  int samples = 20;
  std::uint64_t seed = 7;
  double tol = 1e-8;
  bool translations = true;  // Euclidean only; pattern checks turn this off
};

struct EquivarianceReport {
  double max_deviation = 0.0;
  bool pass = false;
};

// max over sampled isometries g and nodes of
// |F(g. input) - rho(g) F(input)| / (1 + |F(input)|), pass iff <= tol.
// F returns one vector in V_out per node.
using FieldMap =
    std::function<std::vector<Eigen::VectorXd>(const GeometricGraph&, const FeatureField&)>;

EquivarianceReport check_equivariance(const FieldMap& F, const RepSpace& V_out,
                                      const GeometricGraph& graph, const FeatureField& f,
                                      const Atlas& atlas, const EquivOptions& opt);

}  // namespace gmflow
