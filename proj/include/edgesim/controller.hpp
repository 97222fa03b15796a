#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgesim/chunkstore.hpp"
#include "edgesim/measurement.hpp"
#include "edgesim/netsim.hpp"
#include "edgesim/node_agent.hpp"
#include "edgesim/selection.hpp"
#include "edgesim/topology.hpp"

namespace edgesim {

// ---------------------------------------------------------------------------
// Routing

/// Convex weights of the per-link routing cost.
struct RouteWeights {
  double bandwidth = 1.0 / 3.0;
  double delay = 1.0 / 3.0;
  double loss = 1.0 / 3.0;
};

/// c(e) = a*(1 - scale(bw_remain_e)) + b*scale(delay_e) + g*loss_e, scales
/// taken over every link in the snapshot. Indexed by LinkId.
std::vector<double> edge_costs(const LinkSnapshot& states, const RouteWeights& weights = {});

/// Sum of edge costs along the path, accumulated in path order.
double path_cost(const Path& path, std::span<const double> costs);

struct Route {
  Path path;
  std::vector<SwitchId> switches;
  double cost = 0.0;
};

class UnreachableError : public Error {
 public:
  using Error::Error;
};

/// Minimum-cost switch path between the hosts' switches (Dijkstra). Equal-cost
/// paths are broken by the lexicographically smallest switch sequence.
Route compute_route(const Topology& topology, const HostId& src, const HostId& dst,
                    const LinkSnapshot& states, const RouteWeights& weights = {});

// ---------------------------------------------------------------------------
// Information pool

class InformationPool {
 public:
  explicit InformationPool(std::size_t history_bound = 128);

  /// Replaces the latest snapshot iff `snapshot` is newer. Returns whether it did.
  bool update(const LinkSnapshot& snapshot);
  bool update(const NodeLoad& load);

  template <typename T>
  struct Aged {
    T value;
    TimeMs age = 0.0;
  };

  std::optional<Aged<LinkSnapshot>> query_links(TimeMs now) const;
  std::vector<Aged<NodeLoad>> query_nodes(TimeMs now) const;

  const std::optional<LinkSnapshot>& latest_links() const { return links_; }
  const std::map<HostId, NodeLoad>& node_loads() const { return nodes_; }
  const std::deque<LinkSnapshot>& history() const { return history_; }
  std::size_t history_bound() const { return bound_; }

 private:
  std::size_t bound_;
  std::optional<LinkSnapshot> links_;
  std::map<HostId, NodeLoad> nodes_;
  std::deque<LinkSnapshot> history_;
};

// ---------------------------------------------------------------------------
// Flow table

struct FlowEntry {
  Path path;
  double cost = 0.0;
  TimeMs installed_at = 0.0;
};

class FlowTable {
 public:
  using Key = std::pair<std::string, std::string>;  // (src ip, dst ip)

  void install(const std::string& src_ip, const std::string& dst_ip, FlowEntry entry);
  const FlowEntry* find(const std::string& src_ip, const std::string& dst_ip) const;
  bool invalidate(const std::string& src_ip, const std::string& dst_ip);
  const std::map<Key, FlowEntry>& entries() const { return entries_; }

 private:
  std::map<Key, FlowEntry> entries_;
};

// ---------------------------------------------------------------------------
// Controller

enum class DispatchKind { report, store, route, dropped };

struct DispatchResult {
  DispatchKind kind = DispatchKind::dropped;
  std::string detail;
  std::optional<Route> route;
};

struct StoreDecision {
  ChunkPlan plan;
  TimeMs decided_at = 0.0;
};

struct StoreOutcome {
  HostId client;
  std::string file_name;
  Bytes total_bytes = 0;
  TimeMs requested_at = 0.0;
  TimeMs completed_at = 0.0;
  std::optional<StoreDecision> decision;
  std::string refusal;  // nonempty when the controller refused the request
  std::string error;    // nonempty when a transfer or chunk store failed
  IndexRecord index;
  std::string index_text;

  bool ok() const { return decision.has_value() && refusal.empty() && error.empty(); }
  TimeMs write_time_ms() const { return completed_at - requested_at; }
};

struct PullOutcome {
  HostId client;
  IndexRecord record;
  std::vector<FetchedChunk> fetched;
  MergeVerdict verdict;
  TimeMs started_at = 0.0;
  TimeMs completed_at = 0.0;
};

/// Pull refused before any transfer because a chunk is missing.
class PullAborted : public Error {
 public:
  PullAborted(std::string chunk, const std::string& why) : Error(why), chunk_(std::move(chunk)) {}
  const std::string& chunk() const { return chunk_; }

 private:
  std::string chunk_;
};

/// Chooses a plan for a request given the eligible candidate pool.
using SelectionPolicy = std::function<ChunkPlan(const StoreRequest&, std::span<const Candidate>)>;

SelectionPolicy topsis_policy(WeightVector weights);

struct ControllerConfig {
  RouteWeights route_weights;
  ScoreOptions score;
  MonitorConfig monitor;
  TimeMs report_interval_ms = 3000.0;
  /// Samples older than this many report intervals are not decided on.
  double staleness_intervals = 2.0;
  /// Relative change in an installed route's cost that evicts it.
  double reroute_threshold = 0.2;
  std::size_t history_bound = 128;
};

class Controller {
 public:
  using StoreCallback = std::function<void(const StoreOutcome&)>;
  using PullCallback = std::function<void(const PullOutcome&)>;
  using RouteCallback = std::function<void(const Path&)>;

  Controller(Engine& engine, ControllerConfig config, SelectionPolicy policy);

  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  /// Registers a storage node's disk; the controller learns v_total from it.
  void attach_store(NodeStore& store);
  NodeStore& store_of(const HostId& node);

  /// Starts periodic link measurement feeding the information pool.
  void start_monitoring();
  /// Called with every snapshot the monitor produces.
  void set_snapshot_observer(std::function<void(const LinkSnapshot&)> observer) {
    snapshot_observer_ = std::move(observer);
  }

  /// A host emits a packet. Matching flow entries forward it in the data plane
  /// (returns false); otherwise a packet_in reaches the controller after the
  /// access and control-channel delays (returns true).
  bool send_from_host(const Packet& packet);

  DispatchResult handle_packet_in(const Packet& packet);

  /// Builds the candidate pool from fresh samples, scores paths from the
  /// client, and runs the selection policy. Throws RefusedError.
  StoreDecision handle_store_request(const HostId& client, const std::string& file_name, Bytes total_bytes);

  /// Full store path: request packet, decision, packet_out, chunk transfers.
  void store_file(const HostId& client, const std::string& file_name, Bytes total_bytes, StoreCallback done);

  /// Fetches every chunk of `record` to `client` and verifies the merge.
  /// Throws PullAborted before starting if any chunk is missing.
  void handle_pull_request(const HostId& client, const IndexRecord& record, PullCallback done);

  /// Installed route if present, otherwise table-miss: packet_in, route
  /// computation and installation, then `ready` after the flow-mod delay.
  void request_route(const HostId& src, const HostId& dst, RouteCallback ready);

  Route compute_route(const HostId& src, const HostId& dst) const;

  InformationPool& pool() { return pool_; }
  const InformationPool& pool() const { return pool_; }
  FlowTable& flow_table() { return flow_table_; }
  const ControllerConfig& config() const { return config_; }
  TimeMs staleness_limit() const { return config_.staleness_intervals * config_.report_interval_ms; }

  std::size_t packet_in_count() const { return packet_in_count_; }
  /// Decisions and refusals, one JSON object per line.
  const std::vector<std::string>& decision_log() const { return decision_log_; }
  const std::vector<std::string>& dropped_packets() const { return dropped_; }

 private:
  struct PendingStore;

  void on_snapshot(const LinkSnapshot& snapshot);
  void on_store_packet(const Host& client, const std::string& file_name, Bytes total_bytes);
  void begin_transfers(std::shared_ptr<PendingStore> st);
  void finish_store(const std::shared_ptr<PendingStore>& st);
  void log_decision(const std::string& kind, const std::string& file, const ChunkPlan* plan,
                    const std::string& reason);
  double control_delay_from(const Host& host);

  Engine& engine_;
  ControllerConfig config_;
  SelectionPolicy policy_;
  InformationPool pool_;
  FlowTable flow_table_;
  std::unique_ptr<LinkMonitor> monitor_;
  std::function<void(const LinkSnapshot&)> snapshot_observer_;
  std::map<HostId, NodeStore*> stores_;
  std::map<std::pair<HostId, std::string>, std::shared_ptr<PendingStore>> pending_;
  std::size_t packet_in_count_ = 0;
  std::vector<std::string> decision_log_;
  std::vector<std::string> dropped_;
};

/// `STORE:<name>;<bytes>`
std::string encode_store_request(const std::string& file_name, Bytes total_bytes);
std::optional<StoreRequest> decode_store_request(std::string_view payload);

}  // namespace edgesim
