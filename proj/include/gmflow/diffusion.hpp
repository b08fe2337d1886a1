#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "gmflow/bundle.hpp"
#include "gmflow/graph.hpp"
#include "gmflow/group.hpp"

namespace gmflow {

enum class WeightRule { HeatKernel, Unit };

// Discrete energy configuration: edge weights, Dirichlet scale kappa, and the
// Casimir (twisting) term toggle.
struct EnergyConfig {
  WeightRule rule = WeightRule::HeatKernel;
  double t0 = 0.25;        // kernel reference time (HeatKernel rule)
  double kappa = 1.0;      // > 0, multiplies the Dirichlet term only
  bool casimir_on = true;  // false: plain Polyakov energy
  int L_base = 8;          // series order for curved-base kernel weights
};

void validate_energy_config(const EnergyConfig& cfg);

// Per-directed-edge weights aligned with graph.nbrs. Built symmetric;
// operators reject asymmetric input.
using EdgeWeights = std::vector<std::vector<double>>;

// HeatKernel rule: w_ij = base heat kernel at cfg.t0. Truncation roundoff in
// [-1e-12, 0) is clamped to zero; anything more negative is kept so the
// Laplacian constructor surfaces the band-limit violation.
EdgeWeights edge_weights(const GeometricGraph& g, const EnergyConfig& cfg);
EdgeWeights unit_weights(const GeometricGraph& g);

// Generalized Laplacian on the associated bundle:
//   (L h)_i = -sum_{j in N(i)} w_ij (h_i - rho_V(t_ij) h_j) - Cas_V h_i
// with t_ij the chart transition aligning node j's gauge to node i's at
// pos_j. Negative semidefinite over Euclidean bases (identity transports).
class GeneralizedLaplacian {
public:
  GeneralizedLaplacian(const Atlas& atlas, const GeometricGraph& g, const EdgeWeights& w,
                       const RepSpace& V, const std::vector<int>& chart);

  // matrix-free application, one vector per node
  std::vector<Eigen::VectorXd> apply(const std::vector<Eigen::VectorXd>& h) const;

  // dense assemblies on stacked vectors, n * dim(V) <= 4096 (length_error
  // beyond); dense() = dense_dirichlet() - dense_casimir()
  Eigen::MatrixXd dense() const;
  Eigen::MatrixXd dense_dirichlet() const;  // -(L_rho x I), no Casimir
  Eigen::MatrixXd dense_casimir() const;    // I_n x Cas_V (positive part)

  int total_dim() const { return g_->n() * V_.dim(); }
  const RepSpace& rep() const { return V_; }

private:
  const GeometricGraph* g_;
  EdgeWeights w_;
  RepSpace V_;
  // per directed edge: transport rep matrix, empty when it is the identity
  std::vector<std::vector<Eigen::MatrixXd>> transport_;
  bool trivial_cas_ = false;
};

GeneralizedLaplacian generalized_laplacian(const Atlas& atlas, const GeometricGraph& g,
                                           const EdgeWeights& w, const RepSpace& V,
                                           const std::vector<int>& chart);

struct EnergyBreakdown {
  double total = 0.0;
  double dirichlet = 0.0;  // kappa-scaled
  double casimir = 0.0;    // 1/2-scaled, zero when toggled off
};

// E(f) = kappa sum_{(i,j) in E, i<j} w_ij |h_i - rho(t_ij) h_j|^2
//        + [casimir_on] 1/2 sum_i <Cas h_i, h_i>,
// edges accumulated in sorted (i, j) order.
EnergyBreakdown polyakov_energy_parts(const Atlas& atlas, const FeatureField& f,
                                      const EdgeWeights& w, const EnergyConfig& cfg);
double polyakov_energy(const Atlas& atlas, const FeatureField& f, const EdgeWeights& w,
                       const EnergyConfig& cfg);

// h <- h + dt (L h); monotone in the twisted energy for dt <= stable_dt
FeatureField euler_step(const Atlas& atlas, const FeatureField& f, double dt,
                        const EdgeWeights& w);

// 0.9 / (lambda_hat + cas_max) with lambda_hat = 2 max_i sum_j w_ij
// (Gershgorin); 1.0 when the operator vanishes
double stable_dt(const GeometricGraph& g, const EdgeWeights& w, const RepSpace& V);

// descent step on the energy itself: h <- h - dt (2 kappa L_dirichlet +
// [casimir_on] Cas) h. Matches the energy gradient when transports are
// position-consistent (always on Euclidean bases).
FeatureField gradient_step(const Atlas& atlas, const FeatureField& f, double dt,
                           const EdgeWeights& w, const EnergyConfig& cfg);

// exact propagator e^{t L} via the dense matrix exponential;
// n * dim(V) <= 4096 (length_error beyond)
FeatureField propagate_exact(const Atlas& atlas, const FeatureField& f, double t,
                             const EdgeWeights& w);

// attentional baseline: h_i <- h_i + dt sum_{j in N(i)} a(state_j, state_i)
// (h_j - h_i), features treated as plain vectors (no gauge transport)
using Attention = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
FeatureField beltrami_step(const FeatureField& f, const Attention& a, double dt);

}  // namespace gmflow
