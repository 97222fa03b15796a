#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "edgesim/common.hpp"
#include "edgesim/netsim.hpp"
#include "edgesim/topology.hpp"

namespace edgesim {

struct LinkState {
  LinkId link = 0;
  double bw_used_mbps = 0.0;
  double bw_remain_mbps = 0.0;
  double delay_ms = 0.0;
  double loss = 0.0;
  TimeMs measured_at = 0.0;
};

/// All links of a topology measured over one poll window, indexed by LinkId.
struct LinkSnapshot {
  TimeMs measured_at = 0.0;
  std::vector<LinkState> links;
};

/// Probe round trips through a link (t1: A->B, t2: B->A) and controller echo RTTs.
struct DelayProbe {
  double t1 = 0.0;
  double t2 = 0.0;
  double rt_a = 0.0;
  double rt_b = 0.0;
};

struct PathMetrics {
  double bottleneck_bw_mbps = 0.0;
  double total_delay_ms = 0.0;
  double compound_loss = 0.0;
};

struct NetworkScore {
  HostId node;
  double p = 0.0;
};

struct BandwidthEstimate {
  double used_mbps = 0.0;
  double remain_mbps = 0.0;
};

/// Counter deltas over a common window at both ends of a link.
struct LossWindow {
  Bytes a_tx = 0;
  Bytes a_rx = 0;
  Bytes b_tx = 0;
  Bytes b_rx = 0;
};

// ---------------------------------------------------------------------------
// Formulas

/// Utilised and residual bandwidth at one port from two counter reads.
/// used = ((tx+rx)_t - (tx+rx)_{t-1}) / (time_t - time_{t-1}); remain = capacity - used.
/// Throws Error when the two reads share a timestamp.
BandwidthEstimate endpoint_bandwidth(const PortCounters& prev, const PortCounters& cur,
                                     double capacity_mbps);

/// The link value is the endpoint with the smaller residual bandwidth.
BandwidthEstimate link_bandwidth(const BandwidthEstimate& a, const BandwidthEstimate& b);

/// (t1 + t2 - rt_a - rt_b) / 2, clamped at zero.
double delay_from_probe(const DelayProbe& probe);

/// max(1 - b_rx/a_tx, 1 - a_rx/b_tx) clamped to [0,1]; an idle direction contributes 0.
double loss_from_counters(const LossWindow& w);

/// Bottleneck bandwidth, additive delay, compounded loss. `local_bw_mbps` is
/// reported for an empty path (both hosts on one switch).
PathMetrics aggregate_path(std::span<const LinkState> links, double local_bw_mbps);

/// Min-max scale over a candidate set; a constant vector maps to 0.5.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> min_max_scale(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar lo = x.minCoeff();
  const Scalar hi = x.maxCoeff();
  if (!(hi > lo)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(x.size(), Scalar(0.5));
  return ((x.array() - lo) / (hi - lo)).matrix();
}

struct ScoreOptions {
  /// Apply min-max scaling to loss as well; off means raw loss.
  bool scale_loss = false;
};

/// P = scale(bw) - scale(delay) - loss for each candidate. Throws on an empty list.
std::vector<NetworkScore> network_scores(std::span<const std::pair<HostId, PathMetrics>> candidates,
                                         ScoreOptions options = {});

// ---------------------------------------------------------------------------
// Engine-driven measurement

struct MonitorConfig {
  TimeMs poll_interval_ms = 1000.0;
};

/// Polls every link's port counters on a fixed interval and emits a snapshot
/// per window (bandwidth and loss from the counter deltas, delay from a probe).
class LinkMonitor {
 public:
  using Sink = std::function<void(const LinkSnapshot&)>;

  LinkMonitor(Engine& engine, MonitorConfig config = {});

  /// Takes the first counter read now; snapshots follow every poll interval.
  void start(Sink sink);
  void stop() { running_ = false; }
  void set_sink(Sink sink) { sink_ = std::move(sink); }

  /// One counter read of every link; emits a snapshot if a previous read exists.
  void poll();

  DelayProbe probe_delay(LinkId link);
  const MonitorConfig& config() const { return config_; }

 private:
  struct Reading {
    PortCounters a;
    PortCounters b;
  };
  void schedule_next();

  Engine& engine_;
  MonitorConfig config_;
  Sink sink_;
  bool running_ = false;
  std::vector<Reading> last_;
  bool have_last_ = false;
};

/// Runs the engine forward one poll window and measures every link.
/// Only valid outside event handlers.
LinkSnapshot snapshot_all_links(Engine& engine, TimeMs poll_interval_ms = 1000.0);

std::string snapshot_csv_header();
/// `time_ms,link,bw_used_mbps,bw_remain_mbps,delay_ms,loss` rows, one per link.
std::string format_snapshot_csv(const LinkSnapshot& snapshot, const Topology& topology);

}  // namespace edgesim
