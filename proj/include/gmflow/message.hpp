#pragma once

#include <Eigen/Core>
#include <map>
#include <vector>

#include "gmflow/bundle.hpp"
#include "gmflow/graph.hpp"
#include "gmflow/group.hpp"
#include "gmflow/manifold.hpp"

namespace gmflow {

enum class ProductMode { ScalarChannels, TensorContraction };

// Message operator configuration. The quadrature rule must certify the
// integrand band limit n * L_grp + deg(lambda_out); the engine refuses to run
// under-resolved group integrals unless bypass_certification is set (band
// sweep diagnostics only).
struct MessageConfig {
  double t = 1.0;  // Casimir damping time, conventionally the kernel time
  int n = 1;       // correlation order, 1..4
  QuadratureRule rule;
  ProductMode mode = ProductMode::ScalarChannels;
  IrrepLabel lambda_out;          // TensorContraction output irrep
  std::vector<int> mu_path;       // intermediate coupling degrees; empty = greedy
  std::vector<int> selectors;     // per-factor channel index; empty = all zero
  std::vector<std::vector<int>> channel_tuples;  // ScalarChannels n-tuples
  bool casimir_damping = true;
  bool bypass_certification = false;
};

struct MessageResult {
  std::vector<Eigen::VectorXd> values;  // one output vector per node
  RepSpace V_out;
  double quad_residual = 0.0;     // vs a rule one order higher, sampled node
  std::vector<int> coupling_path;  // recorded mu path (TensorContraction)
  double ms_basis = 0.0;           // wall clock, excluded from comparisons
  double ms_contract = 0.0;
};

// A_i(g) = sum_{j in N(i)} bundle_kernel(spec, p_i, p_j g) h_j in ascending
// j, with p_j the chart-i reference point at x_j and h_j gauge-aligned to
// chart i.
Eigen::VectorXd atomic_basis(const Atlas& atlas, int i, const FeatureField& f,
                             const KernelSpec& spec, const GroupElement& g);

// m_i = e^{-t Cas_V} sum_q w_q rho_V(g_q)^{-1} A_i(g_q), blockwise per irrep
MessageResult pairwise_message(const Atlas& atlas, const FeatureField& f, const KernelSpec& spec,
                               const MessageConfig& cfg);

// ScalarChannels: per tuple (c_1..c_n), sum_q w_q prod_xi A_i^{c_xi}(g_q).
// TensorContraction: e^{-t cas(lam_out)} sum_q w_q rho^{lam_out}(g_q)^{-1}
// C[tensor_xi A_i^{(lam_xi)}(g_q)] with C coupled left-to-right from
// Clebsch-Gordan tensors along mu_path. n = 1 reduces bitwise to the
// corresponding pairwise channel.
MessageResult higher_order_message(const Atlas& atlas, const FeatureField& f,
                                   const KernelSpec& spec, const MessageConfig& cfg);

// Quadrature-free evaluation path on Euclidean(3)/SO(3): Mercer expansion of
// the base kernel into radial x spherical-harmonic factors, per-(l,m)
// A-features, n-fold products contracted with Clebsch-Gordan tensors, and
// the character algebra of the group factor. Same output shape as
// higher_order_message.
MessageResult mace_reference_message(const FeatureField& f, const KernelSpec& spec,
                                     const MessageConfig& cfg);

// Per-irrep channel mixing W_lambda (rows = output copies, cols = input
// copies); labels absent from the map pass through unchanged.
struct LinearUpdate {
  std::map<IrrepLabel, Eigen::MatrixXd> weights;
};

// Builds a LinearUpdate from a full channels(V) x channels(V) mixing matrix,
// rejecting any nonzero entry that couples different irreps.
LinearUpdate linear_update_from_matrix(const RepSpace& V, const Eigen::MatrixXd& channel_matrix);

// Every irrep block scaled by s = 2 logistic(w . invariants + bias); s(0) = 1
// at bias 0. Gate inputs are the trivial channels of the message.
struct GatedUpdate {
  Eigen::VectorXd w;  // one weight per trivial channel; empty = all zero
  double bias = 0.0;
};

FeatureField update(const FeatureField& f, const MessageResult& m, const LinearUpdate& u);
FeatureField update(const FeatureField& f, const MessageResult& m, const GatedUpdate& u);

struct ReadoutResult {
  std::vector<double> per_node;
  double total = 0.0;
};

// y_i = sum_c w_c h_i^{(c)}, weights indexed by channels(f.V); a nonzero
// weight on a non-trivial channel is rejected.
ReadoutResult readout(const FeatureField& f, const std::vector<double>& channel_weights);

// Spectral expansion of the base kernel. Sphere2: coefficients c_l of
// sum_l c_l P_l(<x,y>) plus the truncation tail bound
// sum_{l>L} (2l+1) e^{-l(l+1)t} / (4pi). Euclidean(3): the translation-
// invariant kernel is isotropic, so only the l = 0 radial row is populated:
// c_0(r) = k(r) sqrt(4pi).
struct KernelExpansion {
  Manifold M = Manifold::euclidean(3);
  double t = 1.0;
  int L = 0;
  std::vector<double> cl;  // Sphere2 per-degree table
  double tail_bound = 0.0;

  // Sphere2: c_l (r ignored); Euclidean(3): radial coefficient at distance r
  double coefficient(int l, double r = 0.0) const;
};

KernelExpansion expand_kernel(const KernelSpec& spec, const Manifold& M, int L);
double reconstruct(const KernelExpansion& e, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace gmflow
