#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gmflow/io.hpp"
#include "gmflow/selfcheck.hpp"
#include "json.hpp"

namespace {

using gmflow::RunConfig;
using Json = nlohmann::ordered_json;

std::string join_out(const std::string& out_dir, const std::string& name) {
  namespace fs = std::filesystem;
  if (!out_dir.empty() && out_dir != ".") {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw gmflow::IoError("cannot create output directory: " + out_dir);
  }
  return (fs::path(out_dir) / name).string();
}

// rep syntax: comma-separated degree[:multiplicity], e.g. "0:2,1,2"
gmflow::RepSpace parse_rep_flag(const std::string& text, gmflow::Group tag) {
  gmflow::RepSpace V;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string tok = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) throw std::invalid_argument("--rep: empty entry in \"" + text + "\"");
    const std::size_t colon = tok.find(':');
    int deg = 0, mult = 1;
    try {
      deg = std::stoi(tok.substr(0, colon));
      if (colon != std::string::npos) mult = std::stoi(tok.substr(colon + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("--rep: expected degree[:multiplicity], got \"" + tok + "\"");
    }
    if (deg < 0 || mult < 1) throw std::invalid_argument("--rep: invalid entry \"" + tok + "\"");
    V.blocks.push_back({gmflow::IrrepLabel{tag, deg}, mult});
    if (comma == text.size()) break;
  }
  if (V.blocks.empty()) throw std::invalid_argument("--rep: empty declaration");
  return V;
}

gmflow::Manifold parse_manifold_flag(const std::string& name) {
  if (name == "euclidean2") return gmflow::Manifold::euclidean(2);
  if (name == "euclidean3") return gmflow::Manifold::euclidean(3);
  if (name == "sphere2") return gmflow::Manifold::sphere2();
  if (name == "circle") return gmflow::Manifold::circle();
  throw std::invalid_argument("--manifold: unknown manifold \"" + name +
                              "\" (euclidean2, euclidean3, sphere2, circle)");
}

gmflow::InitRule parse_init_flag(const std::string& name) {
  if (name == "zeros") return gmflow::InitRule::Zeros;
  if (name == "random") return gmflow::InitRule::Random;
  if (name == "pattern") return gmflow::InitRule::Pattern;
  throw std::invalid_argument("--init: unknown rule \"" + name + "\" (zeros, random, pattern)");
}

void require_graph_match(const RunConfig& cfg, const gmflow::LoadedGraph& lg) {
  if (!(lg.graph.M == cfg.M))
    throw std::invalid_argument("graph file declares a different manifold than the config");
  if (lg.graph.r_c != cfg.cutoff)
    throw std::invalid_argument("graph file cutoff " + gmflow::format_double(lg.graph.r_c) +
                                " differs from config cutoff " + gmflow::format_double(cfg.cutoff));
  const gmflow::RepSpace& a = lg.field.V;
  const gmflow::RepSpace& b = cfg.V;
  bool same = a.blocks.size() == b.blocks.size();
  for (std::size_t k = 0; same && k < a.blocks.size(); ++k)
    same = a.blocks[k].label == b.blocks[k].label && a.blocks[k].mult == b.blocks[k].mult;
  if (!same) throw std::invalid_argument("graph file declares a different rep space than the config");
}

struct BoundScene {
  gmflow::GeometricGraph graph;
  gmflow::FeatureField field;
};

// input graph for run / check-equivariance: the config's graph file when
// given, otherwise a seeded random scene
BoundScene obtain_scene(const RunConfig& cfg) {
  BoundScene s;
  if (!cfg.graph_path.empty()) {
    gmflow::LoadedGraph lg = gmflow::load_graph(cfg.graph_path);
    require_graph_match(cfg, lg);
    if (lg.edge_discrepancies >= 0)
      std::fprintf(stderr,
                   "warning: graph file lists edges; they are ignored and re-derived "
                   "(%d discrepancies with the derived set)\n",
                   lg.edge_discrepancies);
    s.graph = std::move(lg.graph);
    s.field = std::move(lg.field);
  } else {
    gmflow::GeneratedGraph gg =
        gmflow::gen_graph(cfg.M, cfg.nodes, cfg.cutoff, cfg.seed, cfg.V, gmflow::InitRule::Random);
    s.graph = std::move(gg.graph);
    s.field = std::move(gg.field);
  }
  s.field.graph = &s.graph;
  return s;
}

int cmd_run(const RunConfig& cfg, const std::string& out_dir) {
  BoundScene s = obtain_scene(cfg);
  const gmflow::RunResult res = gmflow::run_schedule(cfg, s.graph, s.field);
  const std::string trace_path = join_out(out_dir, cfg.trace_name);
  const std::string state_path = join_out(out_dir, cfg.state_name);
  gmflow::write_text_file(trace_path, gmflow::trace_to_csv(res.trace));
  gmflow::write_text_file(state_path, gmflow::state_to_json(cfg, res));
  std::printf("trace: %s (%zu records)\n", trace_path.c_str(), res.trace.size());
  std::printf("state: %s\n", state_path.c_str());
  if (res.has_readout) std::printf("readout total: %s\n", gmflow::format_double(res.readout.total).c_str());
  return 0;
}

int cmd_selfcheck(const std::string& suite, const std::string& out_dir, const std::string& out_name) {
  const std::vector<gmflow::SuiteReport> reports = gmflow::run_selfcheck(suite);
  bool pass = true;
  for (const auto& rep : reports)
    for (const auto& c : rep.checks) {
      std::fprintf(stderr, "[%s] %s: %s (residual %.3g, tolerance %.3g)\n", c.pass ? "PASS" : "FAIL",
                   rep.suite.c_str(), c.name.c_str(), c.residual, c.tolerance);
      pass = pass && c.pass;
    }
  const std::string json = gmflow::selfcheck_report_json(reports);
  gmflow::write_text_file(join_out(out_dir, out_name), json);
  std::fputs(json.c_str(), stdout);
  return pass ? 0 : 2;
}

int cmd_gen_graph(const gmflow::Manifold& M, int nodes, double cutoff, std::uint64_t seed,
                  const gmflow::RepSpace& V, gmflow::InitRule init, const std::string& out_dir,
                  const std::string& out_name) {
  const gmflow::GeneratedGraph gg = gmflow::gen_graph(M, nodes, cutoff, seed, V, init);
  const std::string path = join_out(out_dir, out_name);
  gmflow::save_graph(path, gg.graph, gg.field);
  int edges = 0;
  for (const auto& nb : gg.graph.nbrs) edges += static_cast<int>(nb.size());
  std::printf("graph: %s (%d nodes, %d edges)\n", path.c_str(), gg.graph.n(), edges / 2);
  return 0;
}

int cmd_expand_kernel(const RunConfig& cfg, int L, const std::string& out_dir,
                      const std::string& out_name) {
  if (L < 0) L = cfg.kernel.L_base;
  const gmflow::KernelExpansion e = gmflow::expand_kernel(cfg.kernel, cfg.M, L);
  Json doc;
  switch (cfg.M.kind) {
    case gmflow::Manifold::Kind::Euclidean:
      doc["manifold"] = "euclidean";
      break;
    case gmflow::Manifold::Kind::Sphere2:
      doc["manifold"] = "sphere2";
      break;
    case gmflow::Manifold::Kind::Circle:
      doc["manifold"] = "circle";
      break;
  }
  doc["t"] = e.t;
  doc["L"] = e.L;
  if (cfg.M.kind == gmflow::Manifold::Kind::Euclidean) {
    // isotropic kernel: only the l = 0 radial row, sampled out to the cutoff
    Json radial = Json::array();
    for (int k = 0; k <= 16; ++k) {
      const double r = cfg.cutoff * k / 16.0;
      radial.push_back({{"r", r}, {"c0", e.coefficient(0, r)}});
    }
    doc["radial"] = std::move(radial);
  } else {
    Json cl = Json::array();
    for (int l = 0; l <= e.L; ++l) cl.push_back(e.coefficient(l));
    doc["coefficients"] = std::move(cl);
    doc["tail_bound"] = e.tail_bound;
  }
  const std::string json = doc.dump(2) + "\n";
  gmflow::write_text_file(join_out(out_dir, out_name), json);
  std::fputs(json.c_str(), stdout);
  return 0;
}

int cmd_check_equivariance(const RunConfig& cfg, int samples, double tol, const std::string& out_dir,
                           const std::string& out_name) {
  BoundScene s = obtain_scene(cfg);
  const gmflow::Atlas atlas = gmflow::Atlas::standard(cfg.M);
  const double dt = gmflow::resolve_dt(cfg, s.graph);
  const gmflow::FieldMap step = gmflow::schedule_map(cfg, atlas, dt);
  const gmflow::RepSpace V_out =
      cfg.schedule.mode == gmflow::ScheduleMode::Message ? gmflow::updated_space(cfg) : cfg.V;
  gmflow::EquivOptions opt;
  opt.samples = samples;
  opt.seed = cfg.seed;
  opt.tol = tol;
  const gmflow::EquivarianceReport rep = gmflow::check_equivariance(step, V_out, s.graph, s.field, atlas, opt);
  Json doc;
  doc["max_deviation"] = rep.max_deviation;
  doc["tolerance"] = tol;
  doc["samples"] = samples;
  doc["pass"] = rep.pass;
  const std::string json = doc.dump(2) + "\n";
  gmflow::write_text_file(join_out(out_dir, out_name), json);
  std::fputs(json.c_str(), stdout);
  return rep.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equivariant diffusion message passing on discretized manifolds"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir = ".";
  app.add_option("--config", config_path, "run configuration file (JSON)");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", out_dir, "directory for written artifacts");

  CLI::App* sub_run = app.add_subcommand("run", "execute the configured schedule");
  sub_run->fallthrough();

  CLI::App* sub_self = app.add_subcommand("selfcheck", "run a named acceptance suite");
  sub_self->fallthrough();
  std::string suite = "all";
  sub_self->add_option("suite", suite, "casimir|schur|semigroup|equivariance|mace|energy|beltrami|bundle|determinism|all");
  std::string self_out = "selfcheck.json";
  sub_self->add_option("--out", self_out, "report file name");

  CLI::App* sub_gen = app.add_subcommand("gen-graph", "sample a seeded graph with initialized features");
  sub_gen->fallthrough();
  std::string gen_manifold, gen_rep, gen_init = "zeros", gen_out = "graph.json";
  int gen_nodes = 0;
  double gen_cutoff = 0.0;
  sub_gen->add_option("--manifold", gen_manifold, "euclidean2|euclidean3|sphere2|circle");
  sub_gen->add_option("--nodes", gen_nodes, "node count");
  sub_gen->add_option("--cutoff", gen_cutoff, "edge cutoff radius");
  sub_gen->add_option("--rep", gen_rep, "irreps as degree[:multiplicity], comma-separated");
  sub_gen->add_option("--init", gen_init, "zeros|random|pattern");
  sub_gen->add_option("--out", gen_out, "graph file name");

  CLI::App* sub_exp = app.add_subcommand("expand-kernel", "spectral coefficients of the base kernel");
  sub_exp->fallthrough();
  int exp_L = -1;
  std::string exp_out = "kernel.json";
  sub_exp->add_option("--L", exp_L, "expansion order (default: kernel L_base)");
  sub_exp->add_option("--out", exp_out, "coefficient file name");

  CLI::App* sub_chk = app.add_subcommand("check-equivariance", "equivariance of one schedule iteration");
  sub_chk->fallthrough();
  int chk_samples = 20;
  double chk_tol = 1e-8;
  std::string chk_out = "equivariance.json";
  sub_chk->add_option("--samples", chk_samples, "number of sampled transforms")->check(CLI::PositiveNumber);
  sub_chk->add_option("--tol", chk_tol, "pass threshold");
  sub_chk->add_option("--out", chk_out, "report file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (threads > 0) gmflow::set_thread_cap(threads);

    const auto need_config = [&]() {
      if (config_path.empty()) throw std::invalid_argument("--config is required for this subcommand");
      RunConfig cfg = gmflow::load_config(config_path);
      if (seed_opt->count() > 0) cfg.seed = seed;
      return cfg;
    };

    if (sub_run->parsed()) return cmd_run(need_config(), out_dir);
    if (sub_self->parsed()) return cmd_selfcheck(suite, out_dir, self_out);
    if (sub_exp->parsed()) return cmd_expand_kernel(need_config(), exp_L, out_dir, exp_out);
    if (sub_chk->parsed()) return cmd_check_equivariance(need_config(), chk_samples, chk_tol, out_dir, chk_out);
    if (sub_gen->parsed()) {
      gmflow::Manifold M = gmflow::Manifold::euclidean(3);
      gmflow::RepSpace V;
      int nodes = gen_nodes;
      double cutoff = gen_cutoff;
      std::uint64_t gseed = seed;
      if (!config_path.empty()) {
        const RunConfig cfg = gmflow::load_config(config_path);
        M = cfg.M;
        V = cfg.V;
        if (nodes == 0) nodes = cfg.nodes;
        if (cutoff == 0.0) cutoff = cfg.cutoff;
        if (seed_opt->count() == 0) gseed = cfg.seed;
      }
      if (!gen_manifold.empty()) M = parse_manifold_flag(gen_manifold);
      if (!gen_rep.empty()) V = parse_rep_flag(gen_rep, gmflow::structure_group(M));
      if (V.blocks.empty())
        throw std::invalid_argument("gen-graph needs --rep or a --config declaring the rep space");
      if (nodes < 1) throw std::invalid_argument("gen-graph needs --nodes (or a config with \"nodes\")");
      if (cutoff <= 0.0) throw std::invalid_argument("gen-graph needs --cutoff (or a config cutoff)");
      return cmd_gen_graph(M, nodes, cutoff, gseed, V, parse_init_flag(gen_init), out_dir, gen_out);
    }
    throw std::invalid_argument("no subcommand given");
  } catch (const gmflow::IoError& e) {
    std::fprintf(stderr, "gmflow: io error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "gmflow: validation error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gmflow: error: %s\n", e.what());
    return 1;
  }
}
