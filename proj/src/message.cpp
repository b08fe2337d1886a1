#include "gmflow/message.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gmflow/util.hpp"

namespace gmflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_field(const FeatureField& f) {
  if (!f.graph) throw std::invalid_argument("message: field is not attached to a graph");
  const int n = f.graph->n();
  if (static_cast<int>(f.values.size()) != n || static_cast<int>(f.chart.size()) != n)
    throw std::invalid_argument("message: field size does not match the graph");
  const int D = f.V.dim();
  for (const auto& v : f.values)
    if (v.size() != D) throw std::invalid_argument("message: feature dimension mismatch");
}

void check_config(const MessageConfig& cfg) {
  if (!(cfg.t > 0.0)) throw std::invalid_argument("message: diffusion time must be positive");
  if (cfg.n < 1 || cfg.n > 4)
    throw std::invalid_argument("message: correlation order must lie in 1..4");
}

// integrand band limit of the group quadrature; refused when under-certified
void check_rule(const MessageConfig& cfg, Group tag, int band) {
  if (cfg.rule.tag != tag)
    throw std::invalid_argument("message: quadrature rule is for the wrong structure group");
  if (cfg.rule.nodes.empty()) throw std::invalid_argument("message: empty quadrature rule");
  if (!cfg.bypass_certification && cfg.rule.L_exact < band)
    throw std::invalid_argument("message: quadrature rule certifies band " +
                                std::to_string(cfg.rule.L_exact) + " but the integrand has band " +
                                std::to_string(band));
}

// per receiver: base-kernel factors and neighbor features aligned to its chart
struct NodeCache {
  std::vector<double> kM;
  std::vector<Eigen::VectorXd> moved;
};

std::vector<NodeCache> build_cache(const Atlas& atlas, const FeatureField& f,
                                   const KernelSpec& spec) {
  const GeometricGraph& g = *f.graph;
  std::vector<NodeCache> cache(g.n());
  for (int i = 0; i < g.n(); ++i) {
    const auto& nb = g.nbrs[i];
    cache[i].kM.resize(nb.size());
    cache[i].moved.resize(nb.size());
    for (std::size_t a = 0; a < nb.size(); ++a) {
      const int j = nb[a];
      cache[i].kM[a] = base_kernel_spec(g.M, spec, g.pos[i], g.pos[j]);
      if (f.chart[j] == f.chart[i]) {
        cache[i].moved[a] = f.values[j];
      } else {
        const GroupElement t = transition_function(atlas, f.chart[j], f.chart[i], g.pos[j]);
        cache[i].moved[a] = rep_apply(f.V, t, f.values[j]);
      }
    }
  }
  return cache;
}

// A_i(g) from the cache; bitwise identical to the literal atomic_basis loop
// because coefficients multiply in the same order (base, then group factor)
Eigen::VectorXd basis_from_cache(const NodeCache& c, double kG, int D) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
  for (std::size_t a = 0; a < c.kM.size(); ++a) acc += (c.kM[a] * kG) * c.moved[a];
  return acc;
}

std::vector<int> resolve_selectors(const MessageConfig& cfg,
                                   const std::vector<ChannelRef>& chans) {
  std::vector<int> sel = cfg.selectors;
  if (sel.empty()) sel.assign(cfg.n, 0);
  if (static_cast<int>(sel.size()) != cfg.n)
    throw std::invalid_argument("message: expected one channel selector per factor");
  for (int s : sel)
    if (s < 0 || s >= static_cast<int>(chans.size()))
      throw std::invalid_argument("message: channel selector out of range");
  return sel;
}

std::vector<std::vector<int>> resolve_tuples(const MessageConfig& cfg,
                                             const std::vector<ChannelRef>& chans) {
  std::vector<std::vector<int>> tuples = cfg.channel_tuples;
  if (tuples.empty()) {
    int first_trivial = -1;
    for (std::size_t c = 0; c < chans.size(); ++c)
      if (chans[c].label.degree == 0) {
        first_trivial = static_cast<int>(c);
        break;
      }
    if (first_trivial < 0)
      throw std::invalid_argument("message: scalar-channel products need a trivial channel");
    tuples.push_back(std::vector<int>(cfg.n, first_trivial));
  }
  for (const auto& tup : tuples) {
    if (static_cast<int>(tup.size()) != cfg.n)
      throw std::invalid_argument("message: channel tuple length must equal the order");
    for (int c : tup) {
      if (c < 0 || c >= static_cast<int>(chans.size()))
        throw std::invalid_argument("message: channel tuple index out of range");
      if (chans[c].label.degree != 0)
        throw std::invalid_argument("message: scalar-channel products take trivial channels only");
    }
  }
  if (tuples.size() > 10000)
    throw std::invalid_argument("message: more than 1e4 scalar outputs per node");
  return tuples;
}

// degrees reachable from the contiguous range [lo, hi] after coupling one
// more factor of degree l (SO(3) triangle rule keeps ranges contiguous)
void couple_range(int& lo, int& hi, int l) {
  const int new_lo = (l >= lo && l <= hi) ? 0 : std::min(std::abs(lo - l), std::abs(hi - l));
  hi = hi + l;
  lo = new_lo;
}

bool reachable(int m, const std::vector<int>& degs, std::size_t from, int target) {
  int lo = m, hi = m;
  for (std::size_t k = from; k < degs.size(); ++k) couple_range(lo, hi, degs[k]);
  return target >= lo && target <= hi;
}

// validates a user path or greedily builds the default one (smallest feasible
// intermediate degree at every step)
std::vector<int> resolve_path(const std::vector<int>& degs, int lam_out,
                              const std::vector<int>& user_path) {
  const std::size_t n = degs.size();
  if (n == 1) {
    if (degs[0] != lam_out)
      throw std::invalid_argument(
          "message: no admissible coupling path, a single factor of degree " +
          std::to_string(degs[0]) + " cannot reach lambda_out " + std::to_string(lam_out));
    return {};
  }
  if (!user_path.empty()) {
    if (user_path.size() != n - 1)
      throw std::invalid_argument("message: coupling path needs one degree per step");
    int cur = degs[0];
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const int mu = user_path[k];
      if (mu < std::abs(cur - degs[k + 1]) || mu > cur + degs[k + 1])
        throw std::invalid_argument(
            "message: no admissible coupling path, triangle rule fails at step " +
            std::to_string(k + 1) + " coupling (" + std::to_string(cur) + ", " +
            std::to_string(degs[k + 1]) + ") to " + std::to_string(mu));
      cur = mu;
    }
    if (cur != lam_out)
      throw std::invalid_argument("message: coupling path ends at degree " + std::to_string(cur) +
                                  ", expected lambda_out " + std::to_string(lam_out));
    return user_path;
  }
  if (!reachable(degs[0], degs, 1, lam_out))
    throw std::invalid_argument(
        "message: no admissible coupling path, the factor degrees cannot reach lambda_out " +
        std::to_string(lam_out) + " under the triangle rule");
  std::vector<int> path;
  int cur = degs[0];
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const int l = degs[k];
    int chosen = -1;
    for (int mu = std::abs(cur - l); mu <= cur + l; ++mu) {
      if (reachable(mu, degs, k + 1, lam_out)) {
        chosen = mu;
        break;
      }
    }
    // reachability of lam_out from cur guarantees a feasible mu exists
    path.push_back(chosen);
    cur = chosen;
  }
  path.push_back(lam_out);
  return path;
}

// left-to-right contraction along the path: cur <- C^T vec(cur (x) next)
Eigen::VectorXd couple_factors(const std::vector<Eigen::VectorXd>& factors,
                               const std::vector<int>& degs, const std::vector<int>& path) {
  Eigen::VectorXd cur = factors[0];
  int cur_deg = degs[0];
  for (std::size_t k = 1; k < factors.size(); ++k) {
    const CgTensor& C = clebsch_gordan(cur_deg, degs[k], path[k - 1]);
    const Eigen::VectorXd& nxt = factors[k];
    Eigen::VectorXd vw(cur.size() * nxt.size());
    for (int a = 0; a < cur.size(); ++a)
      for (int b = 0; b < nxt.size(); ++b) vw[a * nxt.size() + b] = cur[a] * nxt[b];
    cur = C.mat.transpose() * vw;
    cur_deg = path[k - 1];
  }
  return cur;
}

double damping_factor(const MessageConfig& cfg, const IrrepLabel& lab) {
  return cfg.casimir_damping ? std::exp(-cfg.t * casimir_eigenvalue(lab)) : 1.0;
}

// group-kernel character coefficients a_l; the series the group heat kernel
// is assembled from
std::vector<double> group_char_coeffs(Group tag, const KernelSpec& spec) {
  std::vector<double> a(spec.L_grp + 1);
  for (int l = 0; l <= spec.L_grp; ++l) {
    const double e = std::exp(-static_cast<double>(l) * (l + 1) * spec.t);
    if (tag == Group::SO3) {
      a[l] = static_cast<double>(2 * l + 1) * (2 * l + 1) * e;
    } else {
      a[l] = (l == 0) ? 1.0 : 2.0 * std::exp(-static_cast<double>(l) * l * spec.t);
    }
  }
  return a;
}

}  // namespace

Eigen::VectorXd atomic_basis(const Atlas& atlas, int i, const FeatureField& f,
                             const KernelSpec& spec, const GroupElement& g) {
  check_field(f);
  const GeometricGraph& gr = *f.graph;
  if (i < 0 || i >= gr.n()) throw std::invalid_argument("atomic_basis: node index out of range");
  const Group tag = structure_group(gr.M);
  if (g.group() != tag)
    throw std::invalid_argument("atomic_basis: element is not in the structure group");
  const FiberPoint pi{gr.pos[i], GroupElement::identity(tag), f.chart[i]};
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.V.dim());
  for (std::size_t a = 0; a < gr.nbrs[i].size(); ++a) {
    const int j = gr.nbrs[i][a];
    const FiberPoint pj{gr.pos[j], g, f.chart[i]};
    const double k = bundle_kernel(spec, gr.M, pi, pj);
    if (f.chart[j] == f.chart[i]) {
      acc += k * f.values[j];
    } else {
      const GroupElement t = transition_function(atlas, f.chart[j], f.chart[i], gr.pos[j]);
      acc += k * rep_apply(f.V, t, f.values[j]);
    }
  }
  return acc;
}

MessageResult pairwise_message(const Atlas& atlas, const FeatureField& f, const KernelSpec& spec,
                               const MessageConfig& cfg) {
  check_field(f);
  check_config(cfg);
  validate_kernel_spec(spec);
  const GeometricGraph& g = *f.graph;
  const Group tag = structure_group(g.M);
  check_rule(cfg, tag, spec.L_grp + f.V.max_degree());

  MessageResult res;
  res.V_out = f.V;
  const auto chans = channels(f.V);
  const int D = f.V.dim();

  auto t0 = Clock::now();
  const auto cache = build_cache(atlas, f, spec);
  res.ms_basis = ms_since(t0);

  auto run_rule = [&](const QuadratureRule& rule, int only) {
    // per quadrature node: group kernel value and per-label inverse actions
    std::vector<IrrepLabel> labels;
    for (const auto& b : f.V.blocks) labels.push_back(b.label);
    const int nq = static_cast<int>(rule.nodes.size());
    std::vector<double> kG(nq);
    std::vector<std::vector<Eigen::MatrixXd>> Rinv(nq);
    for (int q = 0; q < nq; ++q) {
      kG[q] = group_heat_kernel(tag, spec.t, rule.nodes[q], spec.L_grp);
      const GroupElement gi = inverse(rule.nodes[q]);
      for (const auto& lab : labels) Rinv[q].push_back(irrep_matrix(lab, gi));
    }
    std::vector<Eigen::VectorXd> out(g.n());
    auto work = [&](int i) {
      Eigen::VectorXd m = Eigen::VectorXd::Zero(D);
      for (int q = 0; q < nq; ++q) {
        const Eigen::VectorXd A = basis_from_cache(cache[i], kG[q], D);
        for (const auto& c : chans) {
          int li = 0;
          while (!(f.V.blocks[li].label == c.label)) ++li;
          m.segment(c.offset, c.dim) +=
              rule.weights[q] * (Rinv[q][li] * A.segment(c.offset, c.dim));
        }
      }
      for (const auto& c : chans)
        m.segment(c.offset, c.dim) *= damping_factor(cfg, c.label);
      out[i] = std::move(m);
    };
    if (only >= 0) {
      work(only);
    } else {
      parallel_for(g.n(), work);
    }
    return out;
  };

  t0 = Clock::now();
  res.values = run_rule(cfg.rule, -1);
  res.ms_contract = ms_since(t0);
  if (g.n() > 0) {
    const auto hi = run_rule(haar_rule(tag, cfg.rule.L_exact + 1), 0);
    res.quad_residual = (hi[0] - res.values[0]).norm();
  }
  return res;
}

MessageResult higher_order_message(const Atlas& atlas, const FeatureField& f,
                                   const KernelSpec& spec, const MessageConfig& cfg) {
  check_field(f);
  check_config(cfg);
  validate_kernel_spec(spec);
  const GeometricGraph& g = *f.graph;
  const Group tag = structure_group(g.M);
  const auto chans = channels(f.V);
  const int D = f.V.dim();

  MessageResult res;
  auto t0 = Clock::now();
  const auto cache = build_cache(atlas, f, spec);
  res.ms_basis = ms_since(t0);

  if (cfg.mode == ProductMode::ScalarChannels) {
    check_rule(cfg, tag, cfg.n * spec.L_grp);
    const auto tuples = resolve_tuples(cfg, chans);
    res.V_out = RepSpace{{{IrrepLabel{tag, 0}, static_cast<int>(tuples.size())}}};

    auto run_rule = [&](const QuadratureRule& rule, int only) {
      const int nq = static_cast<int>(rule.nodes.size());
      std::vector<double> kG(nq);
      for (int q = 0; q < nq; ++q)
        kG[q] = group_heat_kernel(tag, spec.t, rule.nodes[q], spec.L_grp);
      std::vector<Eigen::VectorXd> out(g.n());
      auto work = [&](int i) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<int>(tuples.size()));
        for (int q = 0; q < nq; ++q) {
          const Eigen::VectorXd A = basis_from_cache(cache[i], kG[q], D);
          for (std::size_t tix = 0; tix < tuples.size(); ++tix) {
            double prod = 1.0;
            for (int c : tuples[tix]) prod *= A[chans[c].offset];
            m[static_cast<int>(tix)] += rule.weights[q] * prod;
          }
        }
        out[i] = std::move(m);
      };
      if (only >= 0) {
        work(only);
      } else {
        parallel_for(g.n(), work);
      }
      return out;
    };

    t0 = Clock::now();
    res.values = run_rule(cfg.rule, -1);
    res.ms_contract = ms_since(t0);
    if (g.n() > 0) {
      const auto hi = run_rule(haar_rule(tag, cfg.rule.L_exact + 1), 0);
      res.quad_residual = (hi[0] - res.values[0]).norm();
    }
    return res;
  }

  // TensorContraction: Clebsch-Gordan coupling exists for SO(3) blocks only
  if (tag != Group::SO3 || f.V.group_tag() != Group::SO3)
    throw std::invalid_argument("message: tensor contraction requires SO(3) irrep blocks");
  if (cfg.lambda_out.tag != Group::SO3)
    throw std::invalid_argument("message: lambda_out must be an SO(3) label");
  const int lam = cfg.lambda_out.degree;
  check_rule(cfg, tag, cfg.n * spec.L_grp + lam);
  const auto sel = resolve_selectors(cfg, chans);
  std::vector<int> degs(cfg.n);
  for (int k = 0; k < cfg.n; ++k) degs[k] = chans[sel[k]].label.degree;
  res.coupling_path = resolve_path(degs, lam, cfg.mu_path);
  res.V_out = RepSpace{{{cfg.lambda_out, 1}}};
  const int dout = irrep_dim(cfg.lambda_out);
  if (dout > 10000) throw std::invalid_argument("message: more than 1e4 scalar outputs per node");

  auto run_rule = [&](const QuadratureRule& rule, int only) {
    const int nq = static_cast<int>(rule.nodes.size());
    std::vector<double> kG(nq);
    std::vector<Eigen::MatrixXd> Rinv(nq);
    for (int q = 0; q < nq; ++q) {
      kG[q] = group_heat_kernel(tag, spec.t, rule.nodes[q], spec.L_grp);
      Rinv[q] = irrep_matrix(cfg.lambda_out, inverse(rule.nodes[q]));
    }
    std::vector<Eigen::VectorXd> out(g.n());
    auto work = [&](int i) {
      Eigen::VectorXd m = Eigen::VectorXd::Zero(dout);
      std::vector<Eigen::VectorXd> factors(cfg.n);
      for (int q = 0; q < nq; ++q) {
        const Eigen::VectorXd A = basis_from_cache(cache[i], kG[q], D);
        if (cfg.n == 1) {
          // single factor couples through the identity, matching pairwise
          m += rule.weights[q] * (Rinv[q] * A.segment(chans[sel[0]].offset, chans[sel[0]].dim));
        } else {
          for (int k = 0; k < cfg.n; ++k)
            factors[k] = A.segment(chans[sel[k]].offset, chans[sel[k]].dim);
          const Eigen::VectorXd v = couple_factors(factors, degs, res.coupling_path);
          m += rule.weights[q] * (Rinv[q] * v);
        }
      }
      m *= damping_factor(cfg, cfg.lambda_out);
      out[i] = std::move(m);
    };
    if (only >= 0) {
      work(only);
    } else {
      parallel_for(g.n(), work);
    }
    return out;
  };

  t0 = Clock::now();
  res.values = run_rule(cfg.rule, -1);
  res.ms_contract = ms_since(t0);
  if (g.n() > 0) {
    const auto hi = run_rule(haar_rule(tag, cfg.rule.L_exact + 1), 0);
    res.quad_residual = (hi[0] - res.values[0]).norm();
  }
  return res;
}

MessageResult mace_reference_message(const FeatureField& f, const KernelSpec& spec,
                                     const MessageConfig& cfg) {
  check_field(f);
  check_config(cfg);
  validate_kernel_spec(spec);
  const GeometricGraph& g = *f.graph;
  if (!(g.M == Manifold::euclidean(3)))
    throw std::invalid_argument(
        "mace_reference_message: unsupported configuration, the reference path is defined on "
        "Euclidean(3) with SO(3) features");
  if (f.V.group_tag() != Group::SO3)
    throw std::invalid_argument(
        "mace_reference_message: unsupported configuration, features must carry SO(3) blocks");
  const auto chans = channels(f.V);
  const int D = f.V.dim();

  MessageResult res;
  auto t0 = Clock::now();

  // Mercer table of the isotropic base kernel: a single l = 0 radial row, so
  // the only A-feature is A_{i,00} and B_i = c_0(d) Y_00 contracted features
  const KernelExpansion table = expand_kernel(spec, g.M, 0);
  const Eigen::Vector3d zhat(0.0, 0.0, 1.0);
  std::vector<Eigen::VectorXd> B(g.n());
  for (int i = 0; i < g.n(); ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
    for (std::size_t a = 0; a < g.nbrs[i].size(); ++a) {
      const int j = g.nbrs[i][a];
      const double r = g.dist[i][a];
      const Eigen::Vector3d u =
          r > 0.0 ? Eigen::Vector3d((g.pos[j] - g.pos[i]) / r) : zhat;
      acc += (table.coefficient(0, r) * spherical_harmonic(0, 0, u)) * f.values[j];
    }
    B[i] = std::move(acc);
  }
  res.ms_basis = ms_since(t0);

  // character algebra of the group factor: the n-fold kernel power projected
  // on lambda is sum over degree tuples of prod_a a_l times the tensor
  // multiplicity of lambda
  const std::vector<double> a = group_char_coeffs(Group::SO3, spec);
  auto schur_weight = [&](int lam) {
    std::vector<int> tup(cfg.n, 0);
    double s = 0.0;
    while (true) {
      double prod = 1.0;
      for (int k = 0; k < cfg.n; ++k) prod *= a[tup[k]];
      s += prod * static_cast<double>(multiplicity_in_product(tup, lam));
      int k = 0;
      while (k < cfg.n && tup[k] == spec.L_grp) tup[k++] = 0;
      if (k == cfg.n) break;
      ++tup[k];
    }
    return s / static_cast<double>(2 * lam + 1);
  };

  t0 = Clock::now();
  if (cfg.mode == ProductMode::ScalarChannels) {
    const auto tuples = resolve_tuples(cfg, chans);
    res.V_out = RepSpace{{{IrrepLabel::so3(0), static_cast<int>(tuples.size())}}};
    const double S = schur_weight(0);
    res.values.resize(g.n());
    for (int i = 0; i < g.n(); ++i) {
      Eigen::VectorXd m(static_cast<int>(tuples.size()));
      for (std::size_t tix = 0; tix < tuples.size(); ++tix) {
        double prod = 1.0;
        for (int c : tuples[tix]) prod *= B[i][chans[c].offset];
        m[static_cast<int>(tix)] = S * prod;
      }
      res.values[i] = std::move(m);
    }
    res.ms_contract = ms_since(t0);
    return res;
  }

  if (cfg.lambda_out.tag != Group::SO3)
    throw std::invalid_argument("message: lambda_out must be an SO(3) label");
  const int lam = cfg.lambda_out.degree;
  const auto sel = resolve_selectors(cfg, chans);
  std::vector<int> degs(cfg.n);
  for (int k = 0; k < cfg.n; ++k) degs[k] = chans[sel[k]].label.degree;
  res.coupling_path = resolve_path(degs, lam, cfg.mu_path);
  res.V_out = RepSpace{{{cfg.lambda_out, 1}}};

  // the coupled product B-features pick up the same intertwiner as the
  // quadrature path; the group integral collapses to the scalar schur weight
  const double S = schur_weight(lam);
  const double damp = damping_factor(cfg, cfg.lambda_out);
  res.values.resize(g.n());
  std::vector<Eigen::VectorXd> factors(cfg.n);
  for (int i = 0; i < g.n(); ++i) {
    for (int k = 0; k < cfg.n; ++k)
      factors[k] = B[i].segment(chans[sel[k]].offset, chans[sel[k]].dim);
    Eigen::VectorXd v =
        cfg.n == 1 ? factors[0] : couple_factors(factors, degs, res.coupling_path);
    res.values[i] = (damp * S) * v;
  }
  res.ms_contract = ms_since(t0);
  return res;
}

LinearUpdate linear_update_from_matrix(const RepSpace& V, const Eigen::MatrixXd& channel_matrix) {
  const auto chans = channels(V);
  const int C = static_cast<int>(chans.size());
  if (channel_matrix.rows() != C || channel_matrix.cols() != C)
    throw std::invalid_argument("linear update: expected a square channel mixing matrix");
  for (int r = 0; r < C; ++r)
    for (int c = 0; c < C; ++c)
      if (channel_matrix(r, c) != 0.0 && !(chans[r].label == chans[c].label))
        throw std::invalid_argument("linear update: weights mix channels of different irreps");
  LinearUpdate u;
  for (const auto& b : V.blocks) {
    Eigen::MatrixXd W(b.mult, b.mult);
    // channels of one label sit in one block; collect their channel indices
    std::vector<int> ix;
    for (int c = 0; c < C; ++c)
      if (chans[c].label == b.label) ix.push_back(c);
    if (static_cast<int>(ix.size()) != b.mult)
      throw std::invalid_argument("linear update: duplicate irrep blocks are not supported");
    for (std::size_t r = 0; r < ix.size(); ++r)
      for (std::size_t c = 0; c < ix.size(); ++c) W(r, c) = channel_matrix(ix[r], ix[c]);
    u.weights[b.label] = W;
  }
  return u;
}

namespace {

void check_update_inputs(const FeatureField& f, const MessageResult& m) {
  check_field(f);
  if (m.values.size() != f.values.size())
    throw std::invalid_argument("update: message and field node counts differ");
  const int D = m.V_out.dim();
  for (const auto& v : m.values)
    if (v.size() != D) throw std::invalid_argument("update: message dimension mismatch");
  for (std::size_t b = 0; b < m.V_out.blocks.size(); ++b)
    for (std::size_t b2 = b + 1; b2 < m.V_out.blocks.size(); ++b2)
      if (m.V_out.blocks[b].label == m.V_out.blocks[b2].label)
        throw std::invalid_argument("update: duplicate irrep blocks are not supported");
}

}  // namespace

FeatureField update(const FeatureField& f, const MessageResult& m, const LinearUpdate& u) {
  check_update_inputs(f, m);
  RepSpace V_new;
  for (const auto& b : m.V_out.blocks) {
    auto it = u.weights.find(b.label);
    if (it != u.weights.end() && it->second.cols() != b.mult)
      throw std::invalid_argument("update: weight matrix columns must match the multiplicity");
    const int mult_out = it == u.weights.end() ? b.mult : static_cast<int>(it->second.rows());
    V_new.blocks.push_back({b.label, mult_out});
  }
  FeatureField out;
  out.graph = f.graph;
  out.V = V_new;
  out.chart = f.chart;
  out.values.resize(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    Eigen::VectorXd v(V_new.dim());
    int off_in = 0, off_out = 0;
    for (const auto& b : m.V_out.blocks) {
      const int d = irrep_dim(b.label);
      auto it = u.weights.find(b.label);
      if (it == u.weights.end()) {
        v.segment(off_out, b.mult * d) = m.values[i].segment(off_in, b.mult * d);
        off_out += b.mult * d;
      } else {
        const Eigen::MatrixXd& W = it->second;
        for (int r = 0; r < W.rows(); ++r) {
          Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
          for (int s = 0; s < W.cols(); ++s)
            acc += W(r, s) * m.values[i].segment(off_in + s * d, d);
          v.segment(off_out + r * d, d) = acc;
        }
        off_out += static_cast<int>(W.rows()) * d;
      }
      off_in += b.mult * d;
    }
    out.values[i] = std::move(v);
  }
  return out;
}

FeatureField update(const FeatureField& f, const MessageResult& m, const GatedUpdate& u) {
  check_update_inputs(f, m);
  const auto chans = channels(m.V_out);
  std::vector<int> trivial;
  for (std::size_t c = 0; c < chans.size(); ++c)
    if (chans[c].label.degree == 0) trivial.push_back(static_cast<int>(c));
  Eigen::VectorXd w = u.w;
  if (w.size() == 0) w = Eigen::VectorXd::Zero(static_cast<int>(trivial.size()));
  if (w.size() != static_cast<int>(trivial.size()))
    throw std::invalid_argument("update: gate needs one weight per trivial channel");
  FeatureField out;
  out.graph = f.graph;
  out.V = m.V_out;
  out.chart = f.chart;
  out.values.resize(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    double z = u.bias;
    for (std::size_t k = 0; k < trivial.size(); ++k)
      z += w[static_cast<int>(k)] * m.values[i][chans[trivial[k]].offset];
    const double s = 2.0 / (1.0 + std::exp(-z));
    out.values[i] = s * m.values[i];
  }
  return out;
}

ReadoutResult readout(const FeatureField& f, const std::vector<double>& channel_weights) {
  check_field(f);
  const auto chans = channels(f.V);
  if (channel_weights.size() != chans.size())
    throw std::invalid_argument("readout: expected one weight per channel");
  for (std::size_t c = 0; c < chans.size(); ++c)
    if (channel_weights[c] != 0.0 && chans[c].label.degree != 0)
      throw std::invalid_argument("readout: nonzero weight on a non-invariant channel");
  ReadoutResult r;
  r.per_node.resize(f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    double y = 0.0;
    for (std::size_t c = 0; c < chans.size(); ++c)
      if (channel_weights[c] != 0.0) y += channel_weights[c] * f.values[i][chans[c].offset];
    r.per_node[i] = y;
    r.total += y;
  }
  return r;
}

double KernelExpansion::coefficient(int l, double r) const {
  if (l < 0 || l > L) throw std::invalid_argument("kernel expansion: degree out of range");
  if (M.kind == Manifold::Kind::Euclidean) {
    if (l != 0) return 0.0;
    const double kb = std::pow(4.0 * kPi * t, -1.5) * std::exp(-r * r / (4.0 * t));
    return kb * std::sqrt(4.0 * kPi);
  }
  return cl[l];
}

KernelExpansion expand_kernel(const KernelSpec& spec, const Manifold& M, int L) {
  validate_kernel_spec(spec);
  if (L < 0) throw std::invalid_argument("expand_kernel: negative band limit");
  KernelExpansion e;
  e.M = M;
  e.t = spec.t;
  e.L = L;
  switch (M.kind) {
    case Manifold::Kind::Sphere2: {
      e.cl.resize(L + 1);
      for (int l = 0; l <= L; ++l) {
        const double def =
            (2.0 * l + 1.0) / (4.0 * kPi) * std::exp(-static_cast<double>(l) * (l + 1) * spec.t);
        auto it = spec.overrides.find(l);
        e.cl[l] = it == spec.overrides.end() ? def : it->second;
      }
      for (int l = L + 1; l <= L + 400; ++l) {
        const double term =
            (2.0 * l + 1.0) / (4.0 * kPi) * std::exp(-static_cast<double>(l) * (l + 1) * spec.t);
        e.tail_bound += term;
        if (term < 1e-300) break;
      }
      break;
    }
    case Manifold::Kind::Circle: {
      e.cl.resize(L + 1);
      for (int l = 0; l <= L; ++l) {
        const double def = l == 0 ? 1.0 / (2.0 * kPi)
                                  : std::exp(-static_cast<double>(l) * l * spec.t) / kPi;
        auto it = spec.overrides.find(l);
        e.cl[l] = it == spec.overrides.end() ? def : it->second;
      }
      for (int l = L + 1; l <= L + 400; ++l) {
        const double term = std::exp(-static_cast<double>(l) * l * spec.t) / kPi;
        e.tail_bound += term;
        if (term < 1e-300) break;
      }
      break;
    }
    case Manifold::Kind::Euclidean: {
      if (M.d != 3)
        throw std::invalid_argument("expand_kernel: Euclidean expansion is defined for d = 3");
      if (!spec.overrides.empty())
        throw std::invalid_argument("expand_kernel: Euclidean kernel takes no overrides");
      // isotropic kernel: only the l = 0 radial row is populated, no tail
      break;
    }
  }
  return e;
}

double reconstruct(const KernelExpansion& e, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  validate_point(e.M, x);
  validate_point(e.M, y);
  switch (e.M.kind) {
    case Manifold::Kind::Sphere2: {
      const double u = std::min(1.0, std::max(-1.0, x.dot(y)));
      double acc = 0.0;
      for (int l = 0; l <= e.L; ++l) acc += e.cl[l] * legendre(l, u);
      return acc;
    }
    case Manifold::Kind::Circle: {
      const double d = geodesic_distance(e.M, x, y);
      double acc = 0.0;
      for (int l = 0; l <= e.L; ++l) acc += e.cl[l] * std::cos(l * d);
      return acc;
    }
    case Manifold::Kind::Euclidean: {
      const double r = (x - y).norm();
      const Eigen::Vector3d u =
          r > 0.0 ? Eigen::Vector3d((y - x) / r) : Eigen::Vector3d(0.0, 0.0, 1.0);
      return e.coefficient(0, r) * spherical_harmonic(0, 0, u);
    }
  }
  throw std::logic_error("reconstruct: unreachable");
}

}  // namespace gmflow
