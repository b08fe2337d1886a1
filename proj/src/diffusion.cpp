#include "gmflow/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>

#include "gmflow/manifold.hpp"

namespace gmflow {

namespace {
constexpr int kDenseLimit = 4096;

// index of i in the sorted neighbor list of j, -1 if absent
int reverse_slot(const GeometricGraph& g, int j, int i) {
  const auto& v = g.nbrs[j];
  auto it = std::lower_bound(v.begin(), v.end(), i);
  if (it == v.end() || *it != i) return -1;
  return static_cast<int>(it - v.begin());
}

void validate_weights(const GeometricGraph& g, const EdgeWeights& w) {
  if (static_cast<int>(w.size()) != g.n())
    throw std::invalid_argument("weights: node count mismatch");
  for (int i = 0; i < g.n(); ++i) {
    if (w[i].size() != g.nbrs[i].size())
      throw std::invalid_argument("weights: edge count mismatch");
    for (std::size_t a = 0; a < w[i].size(); ++a) {
      if (!(w[i][a] >= 0.0)) throw std::invalid_argument("weights: negative or NaN weight");
      const int j = g.nbrs[i][a];
      const int b = reverse_slot(g, j, i);
      if (b < 0 || w[j][b] != w[i][a]) throw std::invalid_argument("weights: asymmetric");
    }
  }
}
}  // namespace

void validate_energy_config(const EnergyConfig& cfg) {
  if (!(cfg.kappa > 0.0)) throw std::invalid_argument("energy config: kappa must be positive");
  if (cfg.rule == WeightRule::HeatKernel && !(cfg.t0 > 0.0))
    throw std::invalid_argument("energy config: t0 must be positive for heat-kernel weights");
  if (cfg.L_base < 0) throw std::invalid_argument("energy config: negative band limit");
}

EdgeWeights edge_weights(const GeometricGraph& g, const EnergyConfig& cfg) {
  validate_energy_config(cfg);
  EdgeWeights w(g.n());
  for (int i = 0; i < g.n(); ++i) {
    w[i].resize(g.nbrs[i].size());
    for (std::size_t a = 0; a < w[i].size(); ++a) {
      if (cfg.rule == WeightRule::Unit) {
        w[i][a] = 1.0;
      } else {
        double k = base_heat_kernel(g.M, cfg.t0, g.pos[i], g.pos[g.nbrs[i][a]], cfg.L_base);
        if (k < 0.0 && k >= -1e-12) k = 0.0;
        w[i][a] = k;
      }
    }
  }
  return w;
}

EdgeWeights unit_weights(const GeometricGraph& g) {
  EnergyConfig cfg;
  cfg.rule = WeightRule::Unit;
  return edge_weights(g, cfg);
}

GeneralizedLaplacian::GeneralizedLaplacian(const Atlas& atlas, const GeometricGraph& g,
                                           const EdgeWeights& w, const RepSpace& V,
                                           const std::vector<int>& chart)
    : g_(&g), w_(w), V_(V) {
  validate_weights(g, w);
  if (static_cast<int>(chart.size()) != g.n())
    throw std::invalid_argument("laplacian: chart list does not match node count");
  trivial_cas_ = V.all_trivial();
  transport_.resize(g.n());
  for (int i = 0; i < g.n(); ++i) {
    transport_[i].resize(g.nbrs[i].size());
    for (std::size_t a = 0; a < g.nbrs[i].size(); ++a) {
      const int j = g.nbrs[i][a];
      if (chart[j] == chart[i]) continue;  // identity transport, left empty
      const GroupElement t = transition_function(atlas, chart[j], chart[i], g.pos[j]);
      transport_[i][a] = rep_matrix(V, t);
    }
  }
}

std::vector<Eigen::VectorXd> GeneralizedLaplacian::apply(
    const std::vector<Eigen::VectorXd>& h) const {
  const int n = g_->n();
  const int d = V_.dim();
  if (static_cast<int>(h.size()) != n) throw std::invalid_argument("laplacian: field size mismatch");
  std::vector<Eigen::VectorXd> out(n);
  Eigen::VectorXd cas(d), moved(d);
  for (int i = 0; i < n; ++i) {
    if (h[i].size() != d) throw std::invalid_argument("laplacian: feature dimension mismatch");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    for (std::size_t a = 0; a < g_->nbrs[i].size(); ++a) {
      const int j = g_->nbrs[i][a];
      if (transport_[i][a].size() == 0) {
        acc += w_[i][a] * (h[j] - h[i]);
      } else {
        moved.noalias() = transport_[i][a] * h[j];
        acc += w_[i][a] * (moved - h[i]);
      }
    }
    if (!trivial_cas_) {
      casimir_apply(V_, h[i], cas);
      acc -= cas;
    }
    out[i] = std::move(acc);
  }
  return out;
}

Eigen::MatrixXd GeneralizedLaplacian::dense_dirichlet() const {
  const int n = g_->n();
  const int d = V_.dim();
  const int N = n * d;
  if (N > kDenseLimit) throw std::length_error("laplacian: dense path limited to 4096 dimensions");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t a = 0; a < g_->nbrs[i].size(); ++a) {
      const int j = g_->nbrs[i][a];
      deg += w_[i][a];
      if (transport_[i][a].size() == 0)
        L.block(i * d, j * d, d, d) = w_[i][a] * Eigen::MatrixXd::Identity(d, d);
      else
        L.block(i * d, j * d, d, d) = w_[i][a] * transport_[i][a];
    }
    L.block(i * d, i * d, d, d) -= deg * Eigen::MatrixXd::Identity(d, d);
  }
  return L;
}

Eigen::MatrixXd GeneralizedLaplacian::dense_casimir() const {
  const int n = g_->n();
  const int d = V_.dim();
  const int N = n * d;
  if (N > kDenseLimit) throw std::length_error("laplacian: dense path limited to 4096 dimensions");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N, N);
  const Eigen::MatrixXd blk = casimir_on_space(V_);
  for (int i = 0; i < n; ++i) C.block(i * d, i * d, d, d) = blk;
  return C;
}

Eigen::MatrixXd GeneralizedLaplacian::dense() const { return dense_dirichlet() - dense_casimir(); }

GeneralizedLaplacian generalized_laplacian(const Atlas& atlas, const GeometricGraph& g,
                                           const EdgeWeights& w, const RepSpace& V,
                                           const std::vector<int>& chart) {
  return GeneralizedLaplacian(atlas, g, w, V, chart);
}

EnergyBreakdown polyakov_energy_parts(const Atlas& atlas, const FeatureField& f,
                                      const EdgeWeights& w, const EnergyConfig& cfg) {
  validate_energy_config(cfg);
  const GeometricGraph& g = *f.graph;
  validate_weights(g, w);
  EnergyBreakdown e;
  Eigen::VectorXd moved;
  for (int i = 0; i < g.n(); ++i) {
    for (std::size_t a = 0; a < g.nbrs[i].size(); ++a) {
      const int j = g.nbrs[i][a];
      if (j < i) continue;  // each undirected edge once, sorted (i, j)
      if (f.chart[j] == f.chart[i]) {
        e.dirichlet += w[i][a] * (f.values[i] - f.values[j]).squaredNorm();
      } else {
        const GroupElement t = transition_function(atlas, f.chart[j], f.chart[i], g.pos[j]);
        moved = rep_apply(f.V, t, f.values[j]);
        e.dirichlet += w[i][a] * (f.values[i] - moved).squaredNorm();
      }
    }
  }
  e.dirichlet *= cfg.kappa;
  if (cfg.casimir_on && !f.V.all_trivial()) {
    Eigen::VectorXd cas(f.V.dim());
    for (int i = 0; i < g.n(); ++i) {
      casimir_apply(f.V, f.values[i], cas);
      e.casimir += 0.5 * cas.dot(f.values[i]);
    }
  }
  e.total = e.dirichlet + e.casimir;
  return e;
}

double polyakov_energy(const Atlas& atlas, const FeatureField& f, const EdgeWeights& w,
                       const EnergyConfig& cfg) {
  return polyakov_energy_parts(atlas, f, w, cfg).total;
}

FeatureField euler_step(const Atlas& atlas, const FeatureField& f, double dt,
                        const EdgeWeights& w) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be positive");
  GeneralizedLaplacian L(atlas, *f.graph, w, f.V, f.chart);
  const std::vector<Eigen::VectorXd> dh = L.apply(f.values);
  FeatureField out = f;
  for (int i = 0; i < f.graph->n(); ++i) out.values[i] = f.values[i] + dt * dh[i];
  return out;
}

double stable_dt(const GeometricGraph& g, const EdgeWeights& w, const RepSpace& V) {
  validate_weights(g, w);
  double lam = 0.0;
  for (int i = 0; i < g.n(); ++i) {
    double s = 0.0;
    for (double x : w[i]) s += x;
    lam = std::max(lam, 2.0 * s);
  }
  double cas = 0.0;
  for (const auto& b : V.blocks) cas = std::max(cas, casimir_eigenvalue(b.label));
  const double denom = lam + cas;
  return denom > 0.0 ? 0.9 / denom : 1.0;
}

FeatureField gradient_step(const Atlas& atlas, const FeatureField& f, double dt,
                           const EdgeWeights& w, const EnergyConfig& cfg) {
  validate_energy_config(cfg);
  const GeometricGraph& g = *f.graph;
  validate_weights(g, w);
  FeatureField out = f;
  const double two_kappa = 2.0 * cfg.kappa;
  Eigen::VectorXd moved, cas(f.V.dim());
  const bool with_cas = cfg.casimir_on && !f.V.all_trivial();
  for (int i = 0; i < g.n(); ++i) {
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(f.V.dim());
    for (std::size_t a = 0; a < g.nbrs[i].size(); ++a) {
      const int j = g.nbrs[i][a];
      if (f.chart[j] == f.chart[i]) {
        dir += w[i][a] * (f.values[i] - f.values[j]);
      } else {
        const GroupElement t = transition_function(atlas, f.chart[j], f.chart[i], g.pos[j]);
        moved = rep_apply(f.V, t, f.values[j]);
        dir += w[i][a] * (f.values[i] - moved);
      }
    }
    Eigen::VectorXd grad = two_kappa * dir;
    if (with_cas) {
      casimir_apply(f.V, f.values[i], cas);
      grad += cas;
    }
    out.values[i] = f.values[i] - dt * grad;
  }
  return out;
}

FeatureField propagate_exact(const Atlas& atlas, const FeatureField& f, double t,
                             const EdgeWeights& w) {
  if (t < 0.0) throw std::invalid_argument("propagate_exact: negative time");
  GeneralizedLaplacian L(atlas, *f.graph, w, f.V, f.chart);
  const int n = f.graph->n();
  const int d = f.V.dim();
  const Eigen::MatrixXd P = (t * L.dense()).exp();
  Eigen::VectorXd stacked(n * d);
  for (int i = 0; i < n; ++i) stacked.segment(i * d, d) = f.values[i];
  const Eigen::VectorXd y = P * stacked;
  FeatureField out = f;
  for (int i = 0; i < n; ++i) out.values[i] = y.segment(i * d, d);
  return out;
}

FeatureField beltrami_step(const FeatureField& f, const Attention& a, double dt) {
  const GeometricGraph& g = *f.graph;
  FeatureField out = f;
  for (int i = 0; i < g.n(); ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.values[i].size());
    for (std::size_t s = 0; s < g.nbrs[i].size(); ++s) {
      const int j = g.nbrs[i][s];
      const double aij = a(f.values[j], f.values[i]);
      if (!std::isfinite(aij)) throw std::invalid_argument("beltrami_step: non-finite attention");
      acc += aij * (f.values[j] - f.values[i]);
    }
    out.values[i] = f.values[i] + dt * acc;
  }
  return out;
}

}  // namespace gmflow
