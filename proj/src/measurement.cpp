#include "edgesim/measurement.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>

namespace edgesim {

BandwidthEstimate endpoint_bandwidth(const PortCounters& prev, const PortCounters& cur,
                                     double capacity_mbps) {
  const double elapsed = cur.timestamp - prev.timestamp;
  if (!(elapsed > 0.0)) throw Error("bandwidth measurement: zero elapsed time between polls");
  const double bytes = (static_cast<double>(cur.tx_bytes) + static_cast<double>(cur.rx_bytes)) -
                       (static_cast<double>(prev.tx_bytes) + static_cast<double>(prev.rx_bytes));
  double used = bytes_per_ms_to_mbps(bytes / elapsed);
  used = std::clamp(used, 0.0, capacity_mbps);
  return {used, capacity_mbps - used};
}

BandwidthEstimate link_bandwidth(const BandwidthEstimate& a, const BandwidthEstimate& b) {
  return a.remain_mbps <= b.remain_mbps ? a : b;
}

double delay_from_probe(const DelayProbe& p) {
  return std::max(0.0, (p.t1 + p.t2 - p.rt_a - p.rt_b) / 2.0);
}

double loss_from_counters(const LossWindow& w) {
  auto direction = [](Bytes sent, Bytes received) {
    if (sent == 0) return 0.0;
    return 1.0 - static_cast<double>(received) / static_cast<double>(sent);
  };
  const double loss = std::max(direction(w.a_tx, w.b_rx), direction(w.b_tx, w.a_rx));
  return std::clamp(loss, 0.0, 1.0);
}

PathMetrics aggregate_path(std::span<const LinkState> links, double local_bw_mbps) {
  if (links.empty()) return {local_bw_mbps, 0.0, 0.0};
  PathMetrics m{links.front().bw_remain_mbps, 0.0, 0.0};
  double delivered = 1.0;
  for (const LinkState& s : links) {
    m.bottleneck_bw_mbps = std::min(m.bottleneck_bw_mbps, s.bw_remain_mbps);
    m.total_delay_ms += s.delay_ms;
    delivered *= 1.0 - std::clamp(s.loss, 0.0, 1.0);
  }
  m.compound_loss = std::clamp(1.0 - delivered, 0.0, 1.0);
  return m;
}

std::vector<NetworkScore> network_scores(std::span<const std::pair<HostId, PathMetrics>> candidates,
                                         ScoreOptions options) {
  if (candidates.empty()) throw Error("network_scores: empty candidate list");
  const Eigen::Index n = static_cast<Eigen::Index>(candidates.size());
  Eigen::VectorXd bw(n), delay(n), loss(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PathMetrics& m = candidates[static_cast<std::size_t>(i)].second;
    bw(i) = m.bottleneck_bw_mbps;
    delay(i) = m.total_delay_ms;
    loss(i) = std::clamp(m.compound_loss, 0.0, 1.0);
  }
  const Eigen::VectorXd loss_term = options.scale_loss ? min_max_scale(loss) : loss;
  const Eigen::VectorXd p = min_max_scale(bw) - min_max_scale(delay) - loss_term;

  std::vector<NetworkScore> out;
  out.reserve(candidates.size());
  for (Eigen::Index i = 0; i < n; ++i) out.push_back({candidates[static_cast<std::size_t>(i)].first, p(i)});
  return out;
}

LinkMonitor::LinkMonitor(Engine& engine, MonitorConfig config) : engine_(engine), config_(config) {
  if (!(config_.poll_interval_ms > 0.0)) throw Error("poll interval must be positive");
}

void LinkMonitor::start(Sink sink) {
  sink_ = std::move(sink);
  running_ = true;
  poll();
  schedule_next();
}

void LinkMonitor::schedule_next() {
  engine_.schedule_in(config_.poll_interval_ms, "link_poll", "controller", "", [this] {
    if (!running_) return;
    poll();
    schedule_next();
  });
}

DelayProbe LinkMonitor::probe_delay(LinkId link) {
  const Link& l = engine_.topology().links.at(link);
  DelayProbe p;
  // controller -> A, A -> B over the link, B -> controller; then the reverse.
  p.t1 = engine_.control_channel_one_way(l.a) + l.delay_ms + engine_.control_channel_one_way(l.b);
  p.t2 = engine_.control_channel_one_way(l.b) + l.delay_ms + engine_.control_channel_one_way(l.a);
  p.rt_a = engine_.control_channel_rtt(l.a);
  p.rt_b = engine_.control_channel_rtt(l.b);
  return p;
}

void LinkMonitor::poll() {
  const Topology& topo = engine_.topology();
  std::vector<Reading> now(topo.links.size());
  for (LinkId l = 0; l < topo.links.size(); ++l) {
    now[l].a = engine_.read_port_counters(topo.links[l].a, l);
    now[l].b = engine_.read_port_counters(topo.links[l].b, l);
  }
  if (have_last_) {
    LinkSnapshot snap;
    snap.measured_at = engine_.now();
    snap.links.reserve(topo.links.size());
    for (LinkId l = 0; l < topo.links.size(); ++l) {
      const double cap = topo.links[l].capacity_mbps;
      const Reading& prev = last_[l];
      const Reading& cur = now[l];
      BandwidthEstimate bw = link_bandwidth(endpoint_bandwidth(prev.a, cur.a, cap),
                                            endpoint_bandwidth(prev.b, cur.b, cap));
      LossWindow w{cur.a.tx_bytes - prev.a.tx_bytes, cur.a.rx_bytes - prev.a.rx_bytes,
                   cur.b.tx_bytes - prev.b.tx_bytes, cur.b.rx_bytes - prev.b.rx_bytes};
      LinkState s;
      s.link = l;
      s.bw_used_mbps = bw.used_mbps;
      s.bw_remain_mbps = bw.remain_mbps;
      s.delay_ms = delay_from_probe(probe_delay(l));
      s.loss = loss_from_counters(w);
      s.measured_at = snap.measured_at;
      snap.links.push_back(s);
    }
    if (sink_) sink_(snap);
  }
  last_ = std::move(now);
  have_last_ = true;
}

LinkSnapshot snapshot_all_links(Engine& engine, TimeMs poll_interval_ms) {
  LinkMonitor monitor(engine, MonitorConfig{poll_interval_ms});
  std::optional<LinkSnapshot> out;
  monitor.set_sink([&](const LinkSnapshot& s) { out = s; });
  monitor.poll();
  engine.run_until(engine.now() + poll_interval_ms);
  monitor.poll();
  return *out;
}

std::string snapshot_csv_header() { return "time_ms,link,bw_used_mbps,bw_remain_mbps,delay_ms,loss\n"; }

std::string format_snapshot_csv(const LinkSnapshot& snapshot, const Topology& topology) {
  std::string out;
  char buf[256];
  for (const LinkState& s : snapshot.links) {
    std::snprintf(buf, sizeof buf, "%.3f,%s,%.6f,%.6f,%.6f,%.6f\n", s.measured_at,
                  topology.links.at(s.link).name().c_str(), s.bw_used_mbps, s.bw_remain_mbps, s.delay_ms,
                  s.loss);
    out += buf;
  }
  return out;
}

}  // namespace edgesim
