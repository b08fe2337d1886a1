#include "gmflow/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace gmflow {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::invalid_argument(path + ": " + msg);
}

const Json* find(const Json& o, const char* key) {
  if (!o.is_object()) return nullptr;
  const auto it = o.find(key);
  return it == o.end() ? nullptr : &*it;
}

const Json& need(const Json& o, const std::string& path, const char* key) {
  const Json* p = find(o, key);
  if (p == nullptr) fail(path.empty() ? key : path + "." + key, "missing required field");
  return *p;
}

std::string sub(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}

double as_num(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

std::uint64_t as_u64(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
    fail(path, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

bool as_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string as_str(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

const Json& as_array(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  return j;
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(std::string("parse error: ") + e.what());
  }
}

Manifold parse_manifold(const Json& j, const std::string& path) {
  const std::string kind = as_str(need(j, path, "kind"), sub(path, "kind"));
  if (kind == "sphere2") return Manifold::sphere2();
  if (kind == "circle") return Manifold::circle();
  if (kind == "euclidean") {
    const int d = as_int(need(j, path, "dimension"), sub(path, "dimension"));
    if (d != 2 && d != 3) fail(sub(path, "dimension"), "euclidean dimension must be 2 or 3");
    return Manifold::euclidean(d);
  }
  fail(sub(path, "kind"), "unknown manifold kind \"" + kind + "\" (euclidean, sphere2, circle)");
}

RepSpace parse_rep(const Json& j, Group tag, const std::string& path) {
  const Json& arr = as_array(j, path);
  if (arr.empty()) fail(path, "rep declaration must list at least one irrep");
  RepSpace V;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    const int deg = as_int(need(arr[k], p, "irrep"), sub(p, "irrep"));
    if (deg < 0) fail(sub(p, "irrep"), "irrep degree must be nonnegative");
    int mult = 1;
    if (const Json* m = find(arr[k], "multiplicity")) {
      mult = as_int(*m, sub(p, "multiplicity"));
      if (mult < 1) fail(sub(p, "multiplicity"), "multiplicity must be positive");
    }
    const IrrepLabel lab{tag, deg};
    for (const auto& b : V.blocks)
      if (b.label == lab) fail(p, "duplicate irrep " + std::to_string(deg));
    V.blocks.push_back({lab, mult});
  }
  return V;
}

// Circle's structure group acts only through scalar channels.
void validate_rep_for(const Manifold& M, const RepSpace& V, const std::string& path) {
  if (M.kind != Manifold::Kind::Circle) return;
  for (const auto& b : V.blocks)
    if (b.label.degree != 0) fail(path, "circle features live in scalar channels (m = 0)");
}

std::string chart_name(const Manifold& M, int id) {
  if (M.kind == Manifold::Kind::Sphere2) return id == 0 ? "north" : "south";
  return "global";
}

int chart_id(const Manifold& M, const std::string& name, const std::string& path) {
  if (M.kind == Manifold::Kind::Sphere2) {
    if (name == "north") return 0;
    if (name == "south") return 1;
  } else if (name == "global") {
    return 0;
  }
  fail(path, "unknown chart id \"" + name + "\"");
}

std::string hex16(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

bool same_space(const RepSpace& a, const RepSpace& b) {
  if (a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t k = 0; k < a.blocks.size(); ++k)
    if (!(a.blocks[k].label == b.blocks[k].label) || a.blocks[k].mult != b.blocks[k].mult)
      return false;
  return true;
}

// integrand band limit of the configured message pass
int message_band(const RunConfig& cfg) {
  const MessageConfig& mc = cfg.schedule.message;
  if (!cfg.schedule.has_product) return cfg.kernel.L_grp + cfg.V.max_degree();
  int band = mc.n * cfg.kernel.L_grp;
  if (mc.mode == ProductMode::TensorContraction) band += mc.lambda_out.degree;
  return band;
}

void validate_message_config(RunConfig& cfg) {
  MessageConfig& mc = cfg.schedule.message;
  const Group tag = structure_group(cfg.M);
  if (mc.n < 1 || mc.n > 4) fail("schedule.message.n", "correlation order must be 1..4");
  if (mc.t <= 0.0) fail("schedule.message.t", "damping time must be positive");
  if (mc.n >= 2 && !cfg.schedule.has_product)
    fail("schedule.message.product", "correlation order n >= 2 needs a product mode (scalar, tensor)");
  const auto chans = channels(cfg.V);
  if (!mc.selectors.empty()) {
    if (static_cast<int>(mc.selectors.size()) != mc.n)
      fail("schedule.message.selectors", "expected one channel per factor");
    for (int s : mc.selectors)
      if (s < 0 || s >= static_cast<int>(chans.size()))
        fail("schedule.message.selectors", "channel index " + std::to_string(s) + " out of range");
  }
  if (cfg.schedule.has_product && mc.mode == ProductMode::ScalarChannels) {
    if (mc.channel_tuples.empty()) {
      bool has_trivial = false;
      for (const auto& c : chans) has_trivial = has_trivial || c.label.degree == 0;
      if (!has_trivial)
        fail("schedule.message", "rep has no trivial channel for the default scalar product");
    }
    for (std::size_t k = 0; k < mc.channel_tuples.size(); ++k) {
      const std::string p = "schedule.message.tuples[" + std::to_string(k) + "]";
      const auto& tup = mc.channel_tuples[k];
      if (static_cast<int>(tup.size()) != mc.n) fail(p, "expected one channel per factor");
      for (int c : tup) {
        if (c < 0 || c >= static_cast<int>(chans.size()))
          fail(p, "channel index " + std::to_string(c) + " out of range");
        if (chans[c].label.degree != 0)
          fail(p, "scalar products take trivial channels only");
      }
    }
  }
  if (cfg.schedule.has_product && mc.mode == ProductMode::TensorContraction) {
    if (tag != Group::SO3)
      fail("schedule.message", "tensor contraction couples so3 irrep blocks only");
    mc.lambda_out.tag = tag;
    if (mc.lambda_out.degree < 0) fail("schedule.message.lambda_out", "degree must be nonnegative");
    std::vector<int> degs(mc.n, chans[0].label.degree);
    for (std::size_t k = 0; k < mc.selectors.size(); ++k)
      degs[k] = chans[mc.selectors[k]].label.degree;
    if (mc.mu_path.empty()) {
      // interval reachability of lambda_out under repeated triangle coupling
      int lo = degs[0], hi = degs[0];
      for (int k = 1; k < mc.n; ++k) {
        const int d = degs[k];
        lo = (d >= lo && d <= hi) ? 0 : std::min(std::abs(lo - d), std::abs(hi - d));
        hi += d;
      }
      if (mc.lambda_out.degree < lo || mc.lambda_out.degree > hi)
        fail("schedule.message.lambda_out", "degree " + std::to_string(mc.lambda_out.degree) +
                                                " is not reachable from the selected factors (triangle rule)");
    } else {
      if (static_cast<int>(mc.mu_path.size()) != mc.n - 1)
        fail("schedule.message.mu_path", "expected n - 1 coupling degrees");
      int cur = degs[0];
      for (int k = 1; k < mc.n; ++k) {
        const int mu = mc.mu_path[k - 1];
        if (mu < std::abs(cur - degs[k]) || mu > cur + degs[k])
          fail("schedule.message.mu_path", "triangle rule fails at step " + std::to_string(k) +
                                               " coupling (" + std::to_string(cur) + ", " +
                                               std::to_string(degs[k]) + ") to " + std::to_string(mu));
        cur = mu;
      }
      if (cur != mc.lambda_out.degree)
        fail("schedule.message.mu_path", "path ends at degree " + std::to_string(cur) +
                                             ", lambda_out is " + std::to_string(mc.lambda_out.degree));
    }
  }
  const int band = message_band(cfg);
  if (cfg.quadrature_order > 0 && cfg.quadrature_order < band)
    fail("quadrature_order", "order " + std::to_string(cfg.quadrature_order) +
                                 " does not certify the integrand band " + std::to_string(band));
  mc.rule = haar_rule(tag, cfg.quadrature_order > 0 ? cfg.quadrature_order : band);
}

FeatureField apply_update(const RunConfig& cfg, const FeatureField& f, const MessageResult& m) {
  switch (cfg.update_mode) {
    case UpdateMode::None: {
      FeatureField out;
      out.graph = f.graph;
      out.V = m.V_out;
      out.values = m.values;
      out.chart = f.chart;
      return out;
    }
    case UpdateMode::Linear:
      return update(f, m, linear_update_from_matrix(m.V_out, cfg.update_matrix));
    case UpdateMode::Gated:
      return update(f, m, cfg.gate);
  }
  throw std::logic_error("unreachable");
}

MessageResult run_message(const RunConfig& cfg, const Atlas& atlas, const FeatureField& f) {
  const MessageConfig& mc = cfg.schedule.message;
  return cfg.schedule.has_product ? higher_order_message(atlas, f, cfg.kernel, mc)
                                  : pairwise_message(atlas, f, cfg.kernel, mc);
}

Json graph_json_body(const GeometricGraph& g, const FeatureField& f) {
  Json doc;
  Json man;
  switch (g.M.kind) {
    case Manifold::Kind::Euclidean:
      man["kind"] = "euclidean";
      man["dimension"] = g.M.d;
      break;
    case Manifold::Kind::Sphere2:
      man["kind"] = "sphere2";
      break;
    case Manifold::Kind::Circle:
      man["kind"] = "circle";
      break;
  }
  doc["manifold"] = std::move(man);
  doc["cutoff"] = g.r_c;
  Json rep = Json::array();
  for (const auto& b : f.V.blocks) rep.push_back({{"irrep", b.label.degree}, {"multiplicity", b.mult}});
  doc["rep"] = std::move(rep);
  Json nodes = Json::array();
  for (int i = 0; i < g.n(); ++i) {
    Json node;
    node["id"] = i;
    Json pos = Json::array();
    for (int k = 0; k < g.pos[i].size(); ++k) pos.push_back(g.pos[i][k]);
    node["position"] = std::move(pos);
    node["chart"] = chart_name(g.M, f.chart[i]);
    Json feat = Json::array();
    for (int k = 0; k < f.values[i].size(); ++k) feat.push_back(f.values[i][k]);
    node["features"] = std::move(feat);
    nodes.push_back(std::move(node));
  }
  doc["nodes"] = std::move(nodes);
  return doc;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read file: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write file: " + path);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.config_hash = fnv1a(text);
  try {
    const Json j = parse_json(text);
    if (!j.is_object()) fail("config", "expected a JSON object");
    cfg.M = parse_manifold(need(j, "", "manifold"), "manifold");
    const Group tag = structure_group(cfg.M);
    if (const Json* g = find(j, "group")) {
      const std::string name = as_str(*g, "group");
      const std::string expect = tag == Group::SO3 ? "so3" : "so2";
      if (name != expect)
        fail("group", "structure group of the declared manifold is " + expect);
    }
    cfg.V = parse_rep(need(j, "", "rep"), tag, "rep");
    validate_rep_for(cfg.M, cfg.V, "rep");

    cfg.cutoff = as_num(need(j, "", "cutoff"), "cutoff");
    if (cfg.cutoff <= 0.0) fail("cutoff", "cutoff must be positive");
    if (cfg.M.kind == Manifold::Kind::Sphere2 && cfg.cutoff >= 1.5707963267948966)
      fail("cutoff", "sphere cutoff must stay below pi/2 so a node's chart covers its whole neighborhood");

    if (const Json* k = find(j, "kernel")) {
      cfg.kernel.t = as_num(need(*k, "kernel", "t"), "kernel.t");
      if (const Json* v = find(*k, "L_base")) cfg.kernel.L_base = as_int(*v, "kernel.L_base");
      if (const Json* v = find(*k, "L_grp")) cfg.kernel.L_grp = as_int(*v, "kernel.L_grp");
      if (const Json* v = find(*k, "overrides")) {
        if (!v->is_object()) fail("kernel.overrides", "expected an object of degree: coefficient");
        if (cfg.M.kind == Manifold::Kind::Euclidean)
          fail("kernel.overrides", "euclidean base kernels take no coefficient overrides");
        for (auto it = v->begin(); it != v->end(); ++it) {
          std::size_t used = 0;
          int deg = -1;
          try {
            deg = std::stoi(it.key(), &used);
          } catch (const std::exception&) {
          }
          if (deg < 0 || used != it.key().size())
            fail("kernel.overrides", "keys are nonnegative integer degrees, got \"" + it.key() + "\"");
          cfg.kernel.overrides[deg] = as_num(it.value(), "kernel.overrides." + it.key());
        }
      }
    }
    validate_kernel_spec(cfg.kernel);

    const Json& sch = need(j, "", "schedule");
    const std::string mode = as_str(need(sch, "schedule", "mode"), "schedule.mode");
    if (mode == "diffusion")
      cfg.schedule.mode = ScheduleMode::Diffusion;
    else if (mode == "beltrami")
      cfg.schedule.mode = ScheduleMode::Beltrami;
    else if (mode == "message")
      cfg.schedule.mode = ScheduleMode::Message;
    else
      fail("schedule.mode", "unknown mode \"" + mode + "\" (diffusion, beltrami, message)");
    cfg.schedule.steps = as_int(need(sch, "schedule", "steps"), "schedule.steps");
    if (cfg.schedule.steps < 0) fail("schedule.steps", "steps must be nonnegative");
    if (const Json* v = find(sch, "dt")) {
      cfg.schedule.dt = as_num(*v, "schedule.dt");
      if (cfg.schedule.dt <= 0.0) fail("schedule.dt", "dt must be positive");
    }

    if (const Json* v = find(j, "quadrature_order")) {
      cfg.quadrature_order = as_int(*v, "quadrature_order");
      if (cfg.quadrature_order < 0) fail("quadrature_order", "order must be nonnegative");
    }

    if (cfg.schedule.mode == ScheduleMode::Message) {
      MessageConfig& mc = cfg.schedule.message;
      mc.t = cfg.kernel.t;
      if (const Json* msg = find(sch, "message")) {
        const std::string p = "schedule.message";
        if (const Json* v = find(*msg, "t")) mc.t = as_num(*v, sub(p, "t"));
        if (const Json* v = find(*msg, "n")) mc.n = as_int(*v, sub(p, "n"));
        if (const Json* v = find(*msg, "product")) {
          cfg.schedule.has_product = true;
          const std::string prod = as_str(*v, sub(p, "product"));
          if (prod == "scalar")
            mc.mode = ProductMode::ScalarChannels;
          else if (prod == "tensor")
            mc.mode = ProductMode::TensorContraction;
          else
            fail(sub(p, "product"), "unknown product mode \"" + prod + "\" (scalar, tensor)");
        }
        if (const Json* v = find(*msg, "lambda_out"))
          mc.lambda_out = IrrepLabel{tag, as_int(*v, sub(p, "lambda_out"))};
        if (const Json* v = find(*msg, "selectors")) {
          for (const auto& e : as_array(*v, sub(p, "selectors")))
            mc.selectors.push_back(as_int(e, sub(p, "selectors")));
        }
        if (const Json* v = find(*msg, "mu_path")) {
          for (const auto& e : as_array(*v, sub(p, "mu_path")))
            mc.mu_path.push_back(as_int(e, sub(p, "mu_path")));
        }
        if (const Json* v = find(*msg, "tuples")) {
          for (const auto& row : as_array(*v, sub(p, "tuples"))) {
            std::vector<int> tup;
            for (const auto& e : as_array(row, sub(p, "tuples"))) tup.push_back(as_int(e, sub(p, "tuples")));
            mc.channel_tuples.push_back(std::move(tup));
          }
        }
        if (const Json* v = find(*msg, "damping")) mc.casimir_damping = as_bool(*v, sub(p, "damping"));
      }
      validate_message_config(cfg);
    } else if (cfg.quadrature_order > 0) {
      fail("quadrature_order", "only message schedules integrate over the group");
    }

    cfg.energy.t0 = cfg.kernel.t;
    cfg.energy.L_base = cfg.kernel.L_base;
    if (const Json* e = find(j, "energy")) {
      if (const Json* v = find(*e, "rule")) {
        const std::string rule = as_str(*v, "energy.rule");
        if (rule == "heat")
          cfg.energy.rule = WeightRule::HeatKernel;
        else if (rule == "unit")
          cfg.energy.rule = WeightRule::Unit;
        else
          fail("energy.rule", "unknown weight rule \"" + rule + "\" (heat, unit)");
      }
      if (const Json* v = find(*e, "t0")) cfg.energy.t0 = as_num(*v, "energy.t0");
      if (const Json* v = find(*e, "kappa")) cfg.energy.kappa = as_num(*v, "energy.kappa");
      if (const Json* v = find(*e, "casimir")) cfg.energy.casimir_on = as_bool(*v, "energy.casimir");
      if (const Json* v = find(*e, "L_base")) cfg.energy.L_base = as_int(*v, "energy.L_base");
    }
    validate_energy_config(cfg.energy);

    const RepSpace msgV = message_space(cfg);
    if (const Json* u = find(j, "update")) {
      const std::string umode = as_str(need(*u, "update", "mode"), "update.mode");
      if (umode == "none") {
        cfg.update_mode = UpdateMode::None;
      } else if (umode == "linear") {
        cfg.update_mode = UpdateMode::Linear;
        const Json& rows = as_array(need(*u, "update", "matrix"), "update.matrix");
        const int nc = static_cast<int>(channels(msgV).size());
        if (static_cast<int>(rows.size()) != nc)
          fail("update.matrix", "expected a " + std::to_string(nc) + " x " + std::to_string(nc) +
                                    " channel mixing matrix");
        cfg.update_matrix.resize(nc, nc);
        for (int r = 0; r < nc; ++r) {
          const Json& row = as_array(rows[r], "update.matrix");
          if (static_cast<int>(row.size()) != nc)
            fail("update.matrix", "expected a " + std::to_string(nc) + " x " + std::to_string(nc) +
                                      " channel mixing matrix");
          for (int c = 0; c < nc; ++c) cfg.update_matrix(r, c) = as_num(row[c], "update.matrix");
        }
        linear_update_from_matrix(msgV, cfg.update_matrix);  // rejects cross-irrep mixing
      } else if (umode == "gated") {
        cfg.update_mode = UpdateMode::Gated;
        if (const Json* v = find(*u, "w")) {
          const Json& arr = as_array(*v, "update.w");
          cfg.gate.w.resize(static_cast<int>(arr.size()));
          for (std::size_t k = 0; k < arr.size(); ++k)
            cfg.gate.w[static_cast<int>(k)] = as_num(arr[k], "update.w");
          int trivial = 0;
          for (const auto& c : channels(msgV))
            if (c.label.degree == 0) ++trivial;
          if (cfg.gate.w.size() != 0 && cfg.gate.w.size() != trivial)
            fail("update.w", "expected one weight per trivial channel (" + std::to_string(trivial) + ")");
        }
        if (const Json* v = find(*u, "bias")) cfg.gate.bias = as_num(*v, "update.bias");
      } else {
        fail("update.mode", "unknown update mode \"" + umode + "\" (none, linear, gated)");
      }
    }

    const RepSpace finalV = updated_space(cfg);
    if (cfg.schedule.mode == ScheduleMode::Message && cfg.schedule.steps > 1 &&
        !same_space(finalV, cfg.V))
      fail("schedule.steps", "repeated message passes need an iteration that preserves the feature space");

    if (const Json* r = find(j, "readout")) {
      cfg.has_readout = true;
      const Json& arr = as_array(*r, "readout");
      const auto chans = channels(finalV);
      if (arr.size() != chans.size())
        fail("readout", "expected one weight per channel (" + std::to_string(chans.size()) + ")");
      cfg.readout_weights.resize(arr.size());
      for (std::size_t k = 0; k < arr.size(); ++k) {
        cfg.readout_weights[k] = as_num(arr[k], "readout");
        if (cfg.readout_weights[k] != 0.0 && chans[k].label.degree != 0)
          fail("readout", "nonzero weight on non-invariant channel " + std::to_string(k));
      }
    }

    if (const Json* v = find(j, "equiv_check_every")) {
      cfg.equiv_check_every = as_int(*v, "equiv_check_every");
      if (cfg.equiv_check_every < 0) fail("equiv_check_every", "interval must be nonnegative");
    }
    if (const Json* v = find(j, "nodes")) {
      cfg.nodes = as_int(*v, "nodes");
      if (cfg.nodes < 1) fail("nodes", "node count must be positive");
    }
    if (const Json* v = find(j, "seed")) cfg.seed = as_u64(*v, "seed");
    if (const Json* v = find(j, "graph")) cfg.graph_path = as_str(*v, "graph");
    if (const Json* o = find(j, "output")) {
      if (const Json* v = find(*o, "trace")) cfg.trace_name = as_str(*v, "output.trace");
      if (const Json* v = find(*o, "state")) cfg.state_name = as_str(*v, "output.state");
    }
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg = parse_config(read_text_file(path), path);
  if (!cfg.graph_path.empty()) {
    const std::filesystem::path gp(cfg.graph_path);
    if (gp.is_relative())
      cfg.graph_path = (std::filesystem::path(path).parent_path() / gp).string();
  }
  return cfg;
}

RepSpace message_space(const RunConfig& cfg) {
  if (cfg.schedule.mode != ScheduleMode::Message || !cfg.schedule.has_product) return cfg.V;
  const MessageConfig& mc = cfg.schedule.message;
  const Group tag = structure_group(cfg.M);
  if (mc.mode == ProductMode::ScalarChannels) {
    const int k = mc.channel_tuples.empty() ? 1 : static_cast<int>(mc.channel_tuples.size());
    return RepSpace{{{IrrepLabel{tag, 0}, k}}};
  }
  return RepSpace{{{mc.lambda_out, 1}}};
}

RepSpace updated_space(const RunConfig& cfg) {
  const RepSpace msgV = message_space(cfg);
  if (cfg.update_mode != UpdateMode::Linear) return msgV;
  const LinearUpdate u = linear_update_from_matrix(msgV, cfg.update_matrix);
  RepSpace out;
  for (const auto& b : msgV.blocks) {
    const auto it = u.weights.find(b.label);
    out.blocks.push_back({b.label, it == u.weights.end() ? b.mult : static_cast<int>(it->second.rows())});
  }
  return out;
}

std::string graph_to_json(const GeometricGraph& g, const FeatureField& f) {
  if (f.values.size() != static_cast<std::size_t>(g.n()) || f.chart.size() != f.values.size())
    throw std::invalid_argument("graph_to_json: field does not match the graph");
  return graph_json_body(g, f).dump(2) + "\n";
}

void save_graph(const std::string& path, const GeometricGraph& g, const FeatureField& f) {
  write_text_file(path, graph_to_json(g, f));
}

LoadedGraph parse_graph(const std::string& text, const std::string& origin) {
  LoadedGraph out;
  try {
    const Json j = parse_json(text);
    if (!j.is_object()) fail("graph", "expected a JSON object");
    const Manifold M = parse_manifold(need(j, "", "manifold"), "manifold");
    const Group tag = structure_group(M);
    const double cutoff = as_num(need(j, "", "cutoff"), "cutoff");
    const RepSpace V = parse_rep(need(j, "", "rep"), tag, "rep");
    validate_rep_for(M, V, "rep");
    const Atlas atlas = Atlas::standard(M);

    const Json& nodes = as_array(need(j, "", "nodes"), "nodes");
    const int n = static_cast<int>(nodes.size());
    if (n < 1) fail("nodes", "graph needs at least one node");
    std::vector<Eigen::VectorXd> pos(n);
    std::vector<Eigen::VectorXd> feat(n);
    std::vector<int> chart(n);
    std::vector<bool> seen(n, false);
    for (const auto& node : nodes) {
      const int id = as_int(need(node, "nodes[]", "id"), "nodes[].id");
      if (id < 0 || id >= n) fail("nodes", "node id " + std::to_string(id) + " outside 0.." + std::to_string(n - 1));
      if (seen[id]) fail("nodes", "duplicate node id " + std::to_string(id));
      seen[id] = true;
      const std::string where = "node " + std::to_string(id);
      const Json& parr = as_array(need(node, where, "position"), where + ".position");
      if (static_cast<int>(parr.size()) != M.point_dim())
        fail(where, "position has length " + std::to_string(parr.size()) + ", expected " +
                        std::to_string(M.point_dim()));
      Eigen::VectorXd x(M.point_dim());
      for (int k = 0; k < x.size(); ++k) x[k] = as_num(parr[k], where + ".position");
      try {
        validate_point(M, x);
      } catch (const std::invalid_argument& e) {
        fail(where, e.what());
      }
      const int c = chart_id(M, as_str(need(node, where, "chart"), where + ".chart"), where + ".chart");
      if (!atlas.contains(c, x))
        fail(where, "chart " + chart_name(M, c) + " does not cover the node position");
      const Json& farr = as_array(need(node, where, "features"), where + ".features");
      if (static_cast<int>(farr.size()) != V.dim())
        fail(where, "feature vector has length " + std::to_string(farr.size()) + ", expected " +
                        std::to_string(V.dim()));
      Eigen::VectorXd h(V.dim());
      for (int k = 0; k < h.size(); ++k) h[k] = as_num(farr[k], where + ".features");
      pos[id] = std::move(x);
      feat[id] = std::move(h);
      chart[id] = c;
    }

    out.graph = build_graph(M, pos, cutoff);
    out.field.graph = &out.graph;
    out.field.V = V;
    out.field.values = std::move(feat);
    out.field.chart = std::move(chart);

    if (const Json* e = find(j, "edges")) {
      std::set<std::pair<int, int>> file_edges;
      for (const auto& row : as_array(*e, "edges")) {
        const Json& pr = as_array(row, "edges");
        if (pr.size() != 2) fail("edges", "edges are [i, j] pairs");
        int a = as_int(pr[0], "edges");
        int b = as_int(pr[1], "edges");
        if (a > b) std::swap(a, b);
        if (a < 0 || b >= n || a == b) fail("edges", "edge endpoints outside the node range");
        file_edges.insert({a, b});
      }
      std::set<std::pair<int, int>> derived;
      for (int i = 0; i < n; ++i)
        for (int jn : out.graph.nbrs[i])
          if (i < jn) derived.insert({i, jn});
      int diff = 0;
      for (const auto& pr : file_edges) diff += derived.count(pr) == 0 ? 1 : 0;
      for (const auto& pr : derived) diff += file_edges.count(pr) == 0 ? 1 : 0;
      out.edge_discrepancies = diff;
    }
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(origin + ": " + e.what());
  }
  return out;
}

LoadedGraph load_graph(const std::string& path) { return parse_graph(read_text_file(path), path); }

FeatureField pattern_field(const GeometricGraph& g, const Atlas& atlas, const RepSpace& V,
                           const std::vector<int>& chart) {
  if (chart.size() != static_cast<std::size_t>(g.n()))
    throw std::invalid_argument("pattern_field: one chart id per node");
  FeatureField f = make_field(g, atlas, V);
  f.chart = chart;
  const Manifold& M = g.M;
  for (int i = 0; i < g.n(); ++i) {
    const Eigen::VectorXd& x = g.pos[i];
    Eigen::VectorXd& h = f.values[i];
    int off = 0;
    for (const auto& b : V.blocks) {
      const int deg = b.label.degree;
      const int d = irrep_dim(b.label);
      for (int k = 0; k < b.mult; ++k) {
        const double scale = k + 1;
        Eigen::VectorXd seg = Eigen::VectorXd::Zero(d);
        if (deg == 0) {
          seg[0] = scale;
        } else if (M.kind == Manifold::Kind::Euclidean && M.d == 3) {
          const double r = x.norm();
          if (r > 0.0) {
            const Eigen::Vector3d u = x / r;
            seg = scale * std::pow(r, deg) * spherical_harmonic_vector(deg, u);
          }
        } else {
          // planar / tangential frequency pattern: (w1 + i w2)^m in frame
          // coordinates
          double w1 = 0.0, w2 = 0.0;
          if (M.kind == Manifold::Kind::Euclidean) {
            w1 = x[0];
            w2 = x[1];
          } else if (M.kind == Manifold::Kind::Sphere2) {
            const Eigen::Vector3d zhat(0.0, 0.0, 1.0);
            const Eigen::Vector3d amb = zhat - x[2] * Eigen::Vector3d(x);
            const Eigen::MatrixXd fr = atlas.frame(chart[i], x);
            w1 = fr.col(0).dot(amb);
            w2 = fr.col(1).dot(amb);
          } else {
            throw std::invalid_argument("pattern_field: circle features live in scalar channels");
          }
          double re = 1.0, im = 0.0;
          for (int p = 0; p < deg; ++p) {
            const double nr = re * w1 - im * w2;
            im = re * w2 + im * w1;
            re = nr;
          }
          seg[0] = scale * re;
          seg[1] = scale * im;
        }
        h.segment(off, d) = seg;
        off += d;
      }
    }
  }
  return f;
}

GeneratedGraph gen_graph(const Manifold& M, int n, double cutoff, std::uint64_t seed,
                         const RepSpace& V, InitRule init) {
  if (n < 1) throw std::invalid_argument("gen_graph: node count must be positive");
  GeneratedGraph out;
  out.graph = build_graph(M, sample_points(M, n, seed), cutoff);
  const Atlas atlas = Atlas::standard(M);
  switch (init) {
    case InitRule::Zeros:
      out.field = make_field(out.graph, atlas, V);
      break;
    case InitRule::Random: {
      out.field = make_field(out.graph, atlas, V);
      Rng rng(fnv1a(std::to_string(seed) + ":features"));
      for (auto& v : out.field.values)
        for (int k = 0; k < v.size(); ++k) v[k] = rng.normal();
      break;
    }
    case InitRule::Pattern: {
      FeatureField zero = make_field(out.graph, atlas, V);
      out.field = pattern_field(out.graph, atlas, V, zero.chart);
      break;
    }
  }
  out.field.graph = &out.graph;
  return out;
}

std::string trace_to_csv(const std::vector<TraceRecord>& recs) {
  std::string s = "iter,energy,dirichlet,casimir,max_norm,equiv_residual,ms\n";
  for (const auto& r : recs) {
    s += std::to_string(r.iter);
    s += ',';
    s += format_double(r.energy);
    s += ',';
    s += format_double(r.dirichlet);
    s += ',';
    s += format_double(r.casimir);
    s += ',';
    s += format_double(r.max_norm);
    s += ',';
    if (r.equiv_residual) s += format_double(*r.equiv_residual);
    s += ',';
    s += format_double(r.ms);
    s += '\n';
  }
  return s;
}

double resolve_dt(const RunConfig& cfg, const GeometricGraph& g) {
  if (cfg.schedule.mode == ScheduleMode::Message) return 0.0;
  if (cfg.schedule.dt > 0.0) return cfg.schedule.dt;
  const EdgeWeights w = cfg.schedule.mode == ScheduleMode::Beltrami
                            ? unit_weights(g)
                            : edge_weights(g, cfg.energy);
  return stable_dt(g, w, cfg.V);
}

FieldMap schedule_map(const RunConfig& cfg, const Atlas& atlas, double dt) {
  switch (cfg.schedule.mode) {
    case ScheduleMode::Diffusion:
      return [cfg, atlas, dt](const GeometricGraph& g, const FeatureField& f) {
        return euler_step(atlas, f, dt, edge_weights(g, cfg.energy)).values;
      };
    case ScheduleMode::Beltrami:
      return [dt](const GeometricGraph&, const FeatureField& f) {
        return beltrami_step(f, [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return 1.0; }, dt)
            .values;
      };
    case ScheduleMode::Message:
      return [cfg, atlas](const GeometricGraph&, const FeatureField& f) {
        return apply_update(cfg, f, run_message(cfg, atlas, f)).values;
      };
  }
  throw std::logic_error("unreachable");
}

RunResult run_schedule(const RunConfig& cfg, const GeometricGraph& g, const FeatureField& f0) {
  const Atlas atlas = Atlas::standard(cfg.M);
  const EdgeWeights w = edge_weights(g, cfg.energy);
  const double dt = resolve_dt(cfg, g);
  const FieldMap step = schedule_map(cfg, atlas, dt);
  const RepSpace stepV =
      cfg.schedule.mode == ScheduleMode::Message ? updated_space(cfg) : cfg.V;

  RunResult out;
  FeatureField f = f0;
  const auto t_start = std::chrono::steady_clock::now();
  auto mark = t_start;

  const auto record = [&](int iter) {
    TraceRecord r;
    r.iter = iter;
    const EnergyBreakdown e = polyakov_energy_parts(atlas, f, w, cfg.energy);
    r.energy = e.total;
    r.dirichlet = e.dirichlet;
    r.casimir = e.casimir;
    for (const auto& v : f.values) r.max_norm = std::max(r.max_norm, v.norm());
    if (cfg.equiv_check_every > 0 && iter % cfg.equiv_check_every == 0) {
      EquivOptions opt;
      opt.samples = 1;
      opt.seed = cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(iter + 1));
      opt.tol = 1e-8;
      r.equiv_residual = check_equivariance(step, stepV, g, f, atlas, opt).max_deviation;
    }
    const auto now = std::chrono::steady_clock::now();
    r.ms = std::chrono::duration<double, std::milli>(now - mark).count();
    mark = now;
    out.trace.push_back(std::move(r));
  };

  record(0);
  for (int iter = 1; iter <= cfg.schedule.steps; ++iter) {
    FeatureField next = f;
    next.values = step(g, f);
    if (cfg.schedule.mode == ScheduleMode::Message) next.V = stepV;
    f = std::move(next);
    record(iter);
  }

  if (cfg.has_readout) {
    out.readout = readout(f, cfg.readout_weights);
    out.has_readout = true;
  }
  out.final_field = std::move(f);
  return out;
}

std::string state_to_json(const RunConfig& cfg, const RunResult& r) {
  if (r.final_field.graph == nullptr)
    throw std::invalid_argument("state_to_json: final field is not bound to a graph");
  Json doc;
  doc["version"] = kVersion;
  doc["seed"] = cfg.seed;
  doc["config_hash"] = hex16(cfg.config_hash);
  Json body = graph_json_body(*r.final_field.graph, r.final_field);
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = std::move(it.value());
  if (r.has_readout) {
    Json ro;
    Json per = Json::array();
    for (double y : r.readout.per_node) per.push_back(y);
    ro["per_node"] = std::move(per);
    ro["total"] = r.readout.total;
    doc["readout"] = std::move(ro);
  }
  return doc.dump(2) + "\n";
}

}  // namespace gmflow
