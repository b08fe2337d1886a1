#include "gmflow/graph.hpp"

#include <stdexcept>

namespace gmflow {

GeometricGraph build_graph(const Manifold& M, const std::vector<Eigen::VectorXd>& positions,
                           double r_c) {
  if (!(r_c > 0.0)) throw std::invalid_argument("build_graph: cutoff must be positive");
  if (M.kind == Manifold::Kind::Sphere2 && !(r_c < 1.5707963267948966))
    throw std::invalid_argument("build_graph: Sphere2 cutoff must stay below pi/2 for chart coverage");
  for (const auto& p : positions) validate_point(M, p);

  GeometricGraph g;
  g.M = M;
  g.r_c = r_c;
  g.pos = positions;
  const int n = g.n();
  g.nbrs.assign(n, {});
  g.dist.assign(n, {});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d = geodesic_distance(M, g.pos[i], g.pos[j]);
      if (d <= r_c) {
        g.nbrs[i].push_back(j);
        g.dist[i].push_back(d);
        g.nbrs[j].push_back(i);
        g.dist[j].push_back(d);
      }
    }
  return g;
}

}  // namespace gmflow
