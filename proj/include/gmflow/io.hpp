#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmflow/bundle.hpp"
#include "gmflow/diffusion.hpp"
#include "gmflow/graph.hpp"
#include "gmflow/message.hpp"

namespace gmflow {

inline constexpr const char* kVersion = "0.1.0";

// Filesystem-level failure (open / read / write). Content problems (parse
// errors, schema and invariant violations) stay std::invalid_argument so the
// CLI can map the two classes to distinct exit codes.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ScheduleMode { Diffusion, Beltrami, Message };
enum class UpdateMode { None, Linear, Gated };
enum class InitRule { Zeros, Random, Pattern };

struct Schedule {
  ScheduleMode mode = ScheduleMode::Diffusion;
  int steps = 0;
  double dt = 0.0;  // 0: stability default resolved against the graph
  MessageConfig message;
  bool has_product = false;  // product declared: n-point coupling; else plain pairwise
};

// Fully validated run description. Loading re-checks every module-level
// precondition (cutoff bounds, quadrature certification, coupling-path
// existence, channel shapes) so failures surface before any compute starts.
struct RunConfig {
  Manifold M = Manifold::euclidean(3);
  RepSpace V;
  double cutoff = 1.0;
  KernelSpec kernel;
  Schedule schedule;
  EnergyConfig energy;  // trace energy parts + diffusion edge weights
  UpdateMode update_mode = UpdateMode::None;
  Eigen::MatrixXd update_matrix;  // Linear: channel mixing on the message space
  GatedUpdate gate;               // Gated
  bool has_readout = false;
  std::vector<double> readout_weights;  // per channel of the final space
  int quadrature_order = 0;             // 0: certified default for the band
  int equiv_check_every = 0;            // 0: no spot checks in the trace
  int nodes = 10;                       // generated-graph size when no file is given
  std::uint64_t seed = 0;
  std::string graph_path;  // resolved against the config file's directory
  std::string trace_name = "trace.csv";
  std::string state_name = "state.json";
  std::uint64_t config_hash = 0;  // fnv1a of the raw config bytes
};

// origin labels the text in error messages (file name or "<inline>")
RunConfig parse_config(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);

// output space of one message pass / of one full iteration (V itself for
// diffusion and beltrami schedules)
RepSpace message_space(const RunConfig& cfg);
RepSpace updated_space(const RunConfig& cfg);

struct LoadedGraph {
  GeometricGraph graph;
  FeatureField field;  // field.graph stays bound to this->graph
  int edge_discrepancies = -1;  // -1: file carried no edge list

  LoadedGraph() = default;
  LoadedGraph(LoadedGraph&& o) noexcept
      : graph(std::move(o.graph)),
        field(std::move(o.field)),
        edge_discrepancies(o.edge_discrepancies) {
    field.graph = &graph;
  }
  LoadedGraph& operator=(LoadedGraph&& o) noexcept {
    graph = std::move(o.graph);
    field = std::move(o.field);
    edge_discrepancies = o.edge_discrepancies;
    field.graph = &graph;
    return *this;
  }
};

// Nodes serialized in id order with positions, chart names and feature
// vectors; edges are never written as authoritative data and are re-derived
// from positions + cutoff on load. Numbers use shortest round-trip decimals,
// so save/load round trips are bitwise.
std::string graph_to_json(const GeometricGraph& g, const FeatureField& f);
void save_graph(const std::string& path, const GeometricGraph& g, const FeatureField& f);
LoadedGraph parse_graph(const std::string& text, const std::string& origin);
LoadedGraph load_graph(const std::string& path);

struct GeneratedGraph {
  GeometricGraph graph;
  FeatureField field;  // field.graph stays bound to this->graph

  GeneratedGraph() = default;
  GeneratedGraph(GeneratedGraph&& o) noexcept : graph(std::move(o.graph)), field(std::move(o.field)) {
    field.graph = &graph;
  }
  GeneratedGraph& operator=(GeneratedGraph&& o) noexcept {
    graph = std::move(o.graph);
    field = std::move(o.field);
    field.graph = &graph;
    return *this;
  }
};

GeneratedGraph gen_graph(const Manifold& M, int n, double cutoff, std::uint64_t seed,
                         const RepSpace& V, InitRule init);

// InitRule::Pattern generator: per copy k of each irrep channel, (k+1) times
// an exactly equivariant function of position. Euclidean(3): solid harmonics
// r^l Y_l(u); Euclidean(2): r^m (cos m phi, sin m phi); Sphere2: powers of
// the tangential projection of the z axis in chart components; Circle and
// trivial channels: constant 1. Equivariant under the rotation subgroup
// (check with translations off).
FeatureField pattern_field(const GeometricGraph& g, const Atlas& atlas, const RepSpace& V,
                           const std::vector<int>& chart);

struct TraceRecord {
  int iter = 0;
  double energy = 0.0;     // = dirichlet + casimir
  double dirichlet = 0.0;
  double casimir = 0.0;
  double max_norm = 0.0;
  std::optional<double> equiv_residual;  // every k-th iteration when enabled
  double ms = 0.0;                       // excluded from byte comparisons
};

// header iter,energy,dirichlet,casimir,max_norm,equiv_residual,ms; '.'
// decimal separator, empty cell for absent spot checks
std::string trace_to_csv(const std::vector<TraceRecord>& recs);

struct RunResult {
  std::vector<TraceRecord> trace;  // steps + 1 records, index = iteration
  FeatureField final_field;
  ReadoutResult readout;
  bool has_readout = false;
};

// executes the configured schedule on the given graph; steps = 0 leaves the
// field untouched and still emits the initial record
RunResult run_schedule(const RunConfig& cfg, const GeometricGraph& g, const FeatureField& f0);

// stability default for the schedule's step size when cfg leaves dt at 0
double resolve_dt(const RunConfig& cfg, const GeometricGraph& g);

// one schedule iteration as a field map, the object the equivariance harness
// checks; dt is fixed by the caller so both sides of the check use the same
// step size
FieldMap schedule_map(const RunConfig& cfg, const Atlas& atlas, double dt);

// final-state document: version / seed / config hash metadata, the graph in
// the schema above (loadable as a graph file), readout when configured
std::string state_to_json(const RunConfig& cfg, const RunResult& r);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gmflow
