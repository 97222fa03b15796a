#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "edgesim/common.hpp"
#include "edgesim/topology.hpp"

namespace edgesim {

/// One processed event. Dumped as `time_ms,event_kind,subject,detail`.
struct TraceRecord {
  TimeMs time = 0.0;
  std::string kind;
  std::string subject;
  std::string detail;
};

std::string format_trace_line(const TraceRecord& r);
std::string format_trace(const std::vector<TraceRecord>& records);

/// Ordered inter-switch links from the source host's switch to the destination host's switch.
using Path = std::vector<LinkId>;

using FlowId = std::uint64_t;

/// Control-plane datagram: reports, store requests, decisions.
struct Packet {
  std::string src_ip;
  std::string dst_ip;
  std::string payload;
};

struct Flow {
  FlowId id = 0;
  HostId src;
  HostId dst;
  Bytes bytes = 0;
  Path path;
  TimeMs start = 0.0;
  std::optional<TimeMs> completed_at;
};

struct PortCounters {
  Bytes tx_bytes = 0;
  Bytes rx_bytes = 0;
  TimeMs timestamp = 0.0;
};

/// Constant-rate background load on one direction of a link.
struct CrossTraffic {
  LinkId link = 0;
  SwitchId from;  // sending endpoint; empty means the link's `a` side
  double rate_mbps = 0.0;
  TimeMs start = 0.0;
  TimeMs duration = 0.0;
  /// Background writes into a storage node: also competes for that node's disk.
  std::optional<HostId> disk_node;
};

struct FlowOptions {
  /// Storage node whose disk service rate also bounds the transfer.
  std::optional<HostId> disk_node;
};

class InvalidPathError : public SemanticError {
 public:
  using SemanticError::SemanticError;
};

/// Bytes are thinned by link loss in quanta of this size.
inline constexpr double kLossQuantumBytes = 1500.0;

/// Deterministic discrete-event engine with fluid max-min fair flow sharing.
///
/// Every link is full duplex: each direction is an independent channel of the
/// link's capacity. Storage disks are additional shared resources whose
/// capacity is set by the node agents. Rates are recomputed on every flow or
/// cross-traffic arrival and departure, and whenever a disk capacity changes.
class Engine {
 public:
  using Action = std::function<void()>;
  using CompletionFn = std::function<void(const Flow&)>;

  Engine(Topology topology, std::uint64_t seed);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const Topology& topology() const { return topology_; }
  TimeMs now() const { return now_; }
  std::mt19937_64& rng() { return rng_; }

  using EventId = std::uint64_t;
  EventId schedule_at(TimeMs t, std::string kind, std::string subject, std::string detail,
                      Action action);
  EventId schedule_in(TimeMs delay, std::string kind, std::string subject, std::string detail,
                      Action action) {
    return schedule_at(now_ + delay, std::move(kind), std::move(subject), std::move(detail),
                       std::move(action));
  }
  void cancel(EventId id);

  /// Processes every event with timestamp <= t and leaves the clock at t.
  /// Returns the records fired during this call.
  std::vector<TraceRecord> run_until(TimeMs t);

  /// Runs events while `keep_going()` holds and the next event is not past `deadline`.
  /// Returns false if the deadline was hit with `keep_going()` still true.
  bool run_while(const std::function<bool()>& keep_going, TimeMs deadline);

  FlowId start_flow(const HostId& src, const HostId& dst, Bytes bytes, const Path& path,
                    FlowOptions options = {}, CompletionFn on_complete = {});
  const Flow& flow(FlowId id) const;
  double flow_rate_mbps(FlowId id) const;
  std::size_t active_flow_count() const;

  /// Cumulative counters of the port on `sw` facing `link`.
  PortCounters read_port_counters(const SwitchId& sw, LinkId link);

  /// 2 x control delay plus a jitter draw in [-jitter, +jitter].
  double control_channel_rtt(const SwitchId& sw);
  /// Control delay plus a jitter draw in [-jitter/2, +jitter/2].
  double control_channel_one_way(const SwitchId& sw);

  void inject_cross_traffic(const CrossTraffic& spec);

  /// Changes both directions of a link; measurement keeps the nominal capacity as bw_max.
  void set_link_capacity(LinkId link, double mbps);

  void set_disk_capacity(const HostId& node, double mbps);
  std::optional<double> disk_capacity(const HostId& node) const;
  /// Sum of current rates of flows drawing on the node's disk.
  double disk_throughput_mbps(const HostId& node) const;

  /// Path one-way delay including both host access edges.
  double path_delay_ms(const Path& path) const;
  /// Direction-resolved channel indices for a path starting at switch `from`.
  std::vector<std::size_t> path_channels(const SwitchId& from, const SwitchId& to,
                                         const Path& path) const;

  const std::vector<TraceRecord>& trace() const { return trace_; }

 private:
  struct Event {
    TimeMs time;
    EventId seq;
    std::string kind;
    std::string subject;
    std::string detail;
    Action action;
  };
  struct EventOrder {
    bool operator()(const Event& x, const Event& y) const {
      if (x.time != y.time) return x.time > y.time;
      return x.seq > y.seq;
    }
  };

  struct Channel {
    double capacity_mbps = 0.0;
    double loss = 0.0;
    double tx = 0.0;
    double rx = 0.0;
    double pending = 0.0;  // bytes awaiting a full loss quantum
  };

  // A flow or a cross-traffic source competing for resources.
  struct Transfer {
    FlowId id = 0;
    bool cross = false;
    std::vector<std::size_t> channels;
    std::vector<std::size_t> resources;  // channels plus optional disk
    double cap_mbps = std::numeric_limits<double>::infinity();
    double rate_mbps = 0.0;
    double remaining = 0.0;  // bytes still to send (flows only)
    std::optional<EventId> finish_event;
    std::optional<HostId> disk_node;
  };

  void advance_to(TimeMs t);
  void deliver(Channel& ch, double bytes);
  void recompute_rates();
  void reschedule_finishes();
  void finish_transmission(FlowId id);
  std::size_t disk_resource(const HostId& node);
  double jitter_draw(double half_width);
  bool pop_and_fire();

  Topology topology_;
  std::mt19937_64 rng_;
  TimeMs now_ = 0.0;
  TimeMs integrated_to_ = 0.0;
  EventId next_seq_ = 0;
  FlowId next_flow_ = 1;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::unordered_set<EventId> cancelled_;
  std::vector<TraceRecord> trace_;

  std::vector<Channel> channels_;
  std::map<HostId, std::size_t> disk_index_;
  std::vector<double> disk_capacity_;  // mbps; +inf when unset
  std::map<FlowId, Transfer> active_;
  std::map<FlowId, Flow> flows_;
  std::map<FlowId, CompletionFn> completions_;
};

}  // namespace edgesim
