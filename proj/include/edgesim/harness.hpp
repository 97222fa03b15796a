#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edgesim/controller.hpp"
#include "edgesim/node_agent.hpp"
#include "edgesim/selection.hpp"
#include "edgesim/topology.hpp"

namespace edgesim {

/// EDWS: multi-attribute selection. TEDS: capacity-only baseline.
enum class Mode { edws, teds };

std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);

/// Capacity-proportional placement behind the same 5% veto. Throws RefusedError.
ChunkPlan baseline_select(const StoreRequest& request, std::span<const Candidate> pool);
SelectionPolicy baseline_policy();

struct CrossTrafficSpec {
  SwitchId a;
  SwitchId b;
  SwitchId from;  // empty: from `a`
  double rate_mbps = 0.0;
  TimeMs start = 0.0;
  TimeMs duration = std::numeric_limits<double>::infinity();
  HostId to_node;  // nonempty: background writes into this node's disk
};

/// Scripted capacity change of one link (e.g. a throttling switch). None by default.
struct LinkCapacityEvent {
  SwitchId a;
  SwitchId b;
  TimeMs at = 0.0;
  double capacity_mbps = 0.0;
};

struct Scenario {
  std::string id = "scenario";
  std::string topology_path;
  std::vector<Bytes> file_sizes;
  std::size_t repetitions = 30;
  std::vector<Mode> modes{Mode::edws};
  std::vector<StressProfile> stress;
  std::vector<CrossTrafficSpec> cross_traffic;
  std::vector<LinkCapacityEvent> link_events;
  std::uint64_t seed = 1;
  WeightVector weights;
  std::string output_dir = "out";
  std::vector<NodeProfile> nodes;  // overrides of the per-index defaults
  HostId client;                   // empty: the first client host
  TimeMs warmup_ms = 6500.0;
  TimeMs gap_ms = 4000.0;
  bool verify_pull = true;
  ControllerConfig controller;
};

/// `{"v":..,"p":..,"l":..,"c":..,"r":..}`; missing keys keep their defaults. Throws ParseError.
WeightVector load_weights(std::string_view text);

/// Parses the scenario JSON. Relative topology paths resolve against `base_dir`.
Scenario load_scenario(std::string_view text, const std::string& base_dir = ".");
Scenario load_scenario_file(const std::string& path);

struct MetricsRow {
  std::string scenario_id;
  Mode mode = Mode::edws;
  Bytes file_bytes = 0;
  std::size_t run_index = 0;
  double write_time_ms = 0.0;
  std::vector<std::pair<HostId, Bytes>> chunks;
  std::size_t refusals = 0;
  // Pull verification of the same file; not part of the CSV.
  bool pull_ok = false;
  std::string pull_reason;
  Bytes pulled_bytes = 0;
};

struct ModeRun {
  Mode mode = Mode::edws;
  std::vector<MetricsRow> rows;
  std::string trace;                    // time_ms,event_kind,subject,detail
  std::vector<std::string> decisions;   // NDJSON lines
  std::vector<std::pair<std::string, std::string>> indexes;  // relative path, index text
  std::string link_states_csv;
  std::vector<std::string> warnings;
};

/// One engine per mode. Every file size x repetition is stored, pulled back and verified.
std::vector<ModeRun> run_scenario(const Scenario& scenario, const Topology& topology);
ModeRun run_mode(const Scenario& scenario, const Topology& topology, Mode mode);

std::vector<MetricsRow> collect_rows(std::span<const ModeRun> runs);

/// Header `scenario,mode,file_bytes,run,write_time_ms,chunks,refusals`; chunks as `node:bytes|...`.
std::string format_csv(std::span<const MetricsRow> rows);
/// Throws Error on empty rows or an unwritable path.
void emit_csv(std::span<const MetricsRow> rows, const std::string& path);

/// Writes metrics.csv, traces, decision logs, link states and index files under
/// `<out_dir>/<scenario id>/`. Returns that directory.
std::string write_outputs(const Scenario& scenario, std::span<const ModeRun> runs, const std::string& out_dir);

}  // namespace edgesim
