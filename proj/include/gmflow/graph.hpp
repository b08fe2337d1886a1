#pragma once

#include <Eigen/Core>
#include <vector>

#include "gmflow/manifold.hpp"

namespace gmflow {

// Cutoff graph over manifold points: symmetric adjacency, no self-loops,
// neighbor lists in ascending index order with cached geodesic distances.
struct GeometricGraph {
  Manifold M;
  double r_c = 0.0;
  std::vector<Eigen::VectorXd> pos;
  std::vector<std::vector<int>> nbrs;
  std::vector<std::vector<double>> dist;  // aligned with nbrs

  int n() const { return static_cast<int>(pos.size()); }
};

// Edge set {(i,j) : i != j, geodesic_distance <= r_c}, boundary included.
// Sphere2 requires r_c < pi/2 so a receiver's chart always covers its
// neighbors.
GeometricGraph build_graph(const Manifold& M, const std::vector<Eigen::VectorXd>& positions,
                           double r_c);

}  // namespace gmflow
