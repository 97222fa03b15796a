#pragma once

#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "edgesim/common.hpp"
#include "edgesim/netsim.hpp"

namespace edgesim {

/// One storage node's load sample: remaining/total capacity and three utilisation percentages.
struct NodeLoad {
  HostId node;
  double v_remaining_mb = 0.0;
  double v_total_mb = 0.0;
  double l_disk_io = 0.0;
  double c_cpu = 0.0;
  double r_mem = 0.0;
  TimeMs sampled_at = 0.0;

  double remaining_fraction() const { return v_total_mb > 0.0 ? v_remaining_mb / v_total_mb : 0.0; }
};

struct StressProfile {
  HostId node;
  double cpu_add = 40.0;
  double mem_add = 20.0;
  double io_add = 30.0;
  TimeMs start = 0.0;
  TimeMs duration = std::numeric_limits<double>::infinity();

  bool active_at(TimeMs t) const { return t >= start && t < start + duration; }
};

/// Static per-node hardware and idle-load description.
struct NodeProfile {
  HostId node;
  double disk_rate_mbps = 300.0;
  double v_total_mb = 32768.0;
  double v_remaining_mb = 16384.0;
  double base_cpu = 5.0;
  double base_mem = 20.0;
  double base_io = 0.0;
};

/// Defaults for the i-th storage node (0-based): 400, 300 and 150 Mbps disks,
/// weaker boards idling hotter.
NodeProfile default_node_profile(const HostId& node, std::size_t index);

using ReportPacket = Packet;

class MalformedPayload : public ParseError {
 public:
  using ParseError::ParseError;
};

/// `V=<mb>;L=<pct>;C=<pct>;R=<pct>`: V in whole megabytes, percentages to one decimal.
std::string encode_report(const NodeLoad& load);

/// Identity and total capacity are not on the wire; the controller supplies them.
struct ReportContext {
  HostId node;
  double v_total_mb = 0.0;
  TimeMs arrival = 0.0;
};

/// Inverse of encode_report. Throws MalformedPayload.
NodeLoad decode_report(std::string_view payload, const ReportContext& context);

/// Effective inbound write rate for a node under disk I/O load `l_pct`.
inline double effective_disk_rate(double disk_base_rate_mbps, double l_pct) {
  return disk_base_rate_mbps * (1.0 - l_pct / 100.0);
}

/// Simulated storage node: composes idle load, stress, and transfer-induced I/O,
/// drives the node's disk capacity in the engine, and self-reports every interval.
class NodeAgent {
 public:
  using RemainingFn = std::function<double()>;
  using SendFn = std::function<void(const ReportPacket&)>;

  NodeAgent(Engine& engine, NodeProfile profile, std::string ip, RemainingFn remaining_mb);

  const NodeProfile& profile() const { return profile_; }
  const HostId& node() const { return profile_.node; }

  /// Registers a stress window; disk capacity follows its start and end.
  void add_stress(const StressProfile& stress);

  NodeLoad sample_load() const;

  /// I/O load excluding in-flight transfers; this is what degrades the disk.
  double external_io_load() const;

  /// Begins the report loop at `first_tick`, then every `interval_ms`.
  void start_reporting(std::string controller_ip, SendFn send, TimeMs first_tick = 0.0,
                       TimeMs interval_ms = 3000.0);
  void self_report_tick();

  std::size_t ticks() const { return ticks_; }

 private:
  void refresh_disk_capacity();

  Engine& engine_;
  NodeProfile profile_;
  std::string ip_;
  RemainingFn remaining_mb_;
  std::vector<StressProfile> stress_;
  std::string controller_ip_;
  SendFn send_;
  TimeMs interval_ms_ = 3000.0;
  std::size_t ticks_ = 0;
};

}  // namespace edgesim
