#include "edgesim/node_agent.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace edgesim {

namespace {

double clamp_pct(double v) { return std::clamp(v, 0.0, 100.0); }

}  // namespace

NodeProfile default_node_profile(const HostId& node, std::size_t index) {
  switch (index) {
    case 0:
      return {node, 400.0, 32768.0, 20480.0, 5.0, 15.0, 2.0};
    case 1:
      return {node, 300.0, 65536.0, 40960.0, 10.0, 25.0, 5.0};
    case 2:
      return {node, 150.0, 32768.0, 20480.0, 25.0, 55.0, 10.0};
    default:
      return {node, 300.0, 32768.0, 20480.0, 10.0, 25.0, 5.0};
  }
}

std::string encode_report(const NodeLoad& load) {
  char buf[160];
  const long long v = static_cast<long long>(std::floor(std::max(0.0, load.v_remaining_mb)));
  std::snprintf(buf, sizeof buf, "V=%lld;L=%.1f;C=%.1f;R=%.1f", v, load.l_disk_io, load.c_cpu, load.r_mem);
  return buf;
}

NodeLoad decode_report(std::string_view payload, const ReportContext& context) {
  static constexpr std::array<char, 4> kKeys{'V', 'L', 'C', 'R'};
  std::array<double, 4> values{};

  std::string_view rest = payload;
  for (std::size_t i = 0; i < kKeys.size(); ++i) {
    const std::size_t end = rest.find(';');
    std::string_view field = rest.substr(0, end);
    if (field.size() < 2 || field[0] != kKeys[i] || field[1] != '=') {
      throw MalformedPayload("report payload: missing key '" + std::string(1, kKeys[i]) + "'");
    }
    std::string_view text = field.substr(2);
    if (text.empty()) throw MalformedPayload("report payload: empty value for '" + std::string(1, kKeys[i]) + "'");

    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    std::from_chars_result r{};
    if (i == 0) {
      long long mb = 0;
      r = std::from_chars(first, last, mb);
      value = static_cast<double>(mb);
    } else {
      r = std::from_chars(first, last, value);
    }
    if (r.ec != std::errc{} || r.ptr != last || !std::isfinite(value)) {
      throw MalformedPayload("report payload: non-numeric value '" + std::string(text) + "'");
    }
    if (i == 0 && value < 0.0) throw MalformedPayload("report payload: negative capacity");
    if (i > 0 && (value < 0.0 || value > 100.0)) {
      throw MalformedPayload("report payload: percentage out of range for '" + std::string(1, kKeys[i]) + "'");
    }
    values[i] = value;

    if (i + 1 < kKeys.size()) {
      if (end == std::string_view::npos) {
        throw MalformedPayload("report payload: missing key '" + std::string(1, kKeys[i + 1]) + "'");
      }
      rest = rest.substr(end + 1);
    } else if (end != std::string_view::npos) {
      throw MalformedPayload("report payload: trailing data");
    }
  }

  NodeLoad load;
  load.node = context.node;
  load.v_remaining_mb = values[0];
  load.v_total_mb = context.v_total_mb;
  load.l_disk_io = values[1];
  load.c_cpu = values[2];
  load.r_mem = values[3];
  load.sampled_at = context.arrival;
  return load;
}

NodeAgent::NodeAgent(Engine& engine, NodeProfile profile, std::string ip, RemainingFn remaining_mb)
    : engine_(engine), profile_(std::move(profile)), ip_(std::move(ip)), remaining_mb_(std::move(remaining_mb)) {
  if (!remaining_mb_) {
    remaining_mb_ = [v = profile_.v_remaining_mb] { return v; };
  }
  refresh_disk_capacity();
}

void NodeAgent::add_stress(const StressProfile& stress) {
  if (stress.cpu_add < 0.0 || stress.mem_add < 0.0 || stress.io_add < 0.0) {
    throw SemanticError("stress additions must be non-negative");
  }
  stress_.push_back(stress);
  const std::string detail = "cpu+" + std::to_string(static_cast<int>(stress.cpu_add)) + ";mem+" +
                             std::to_string(static_cast<int>(stress.mem_add)) + ";io+" +
                             std::to_string(static_cast<int>(stress.io_add));
  engine_.schedule_at(stress.start, "stress_start", profile_.node, detail, [this] { refresh_disk_capacity(); });
  if (std::isfinite(stress.duration)) {
    engine_.schedule_at(stress.start + stress.duration, "stress_end", profile_.node, detail,
                        [this] { refresh_disk_capacity(); });
  }
}

double NodeAgent::external_io_load() const {
  double io = profile_.base_io;
  const TimeMs now = engine_.now();
  for (const StressProfile& s : stress_) {
    if (s.active_at(now)) io += s.io_add;
  }
  return clamp_pct(io);
}

void NodeAgent::refresh_disk_capacity() {
  engine_.set_disk_capacity(profile_.node, effective_disk_rate(profile_.disk_rate_mbps, external_io_load()));
}

NodeLoad NodeAgent::sample_load() const {
  const TimeMs now = engine_.now();
  double cpu = profile_.base_cpu;
  double mem = profile_.base_mem;
  for (const StressProfile& s : stress_) {
    if (!s.active_at(now)) continue;
    cpu += s.cpu_add;
    mem += s.mem_add;
  }
  double io = external_io_load();
  if (profile_.disk_rate_mbps > 0.0) io += 100.0 * engine_.disk_throughput_mbps(profile_.node) / profile_.disk_rate_mbps;

  NodeLoad load;
  load.node = profile_.node;
  load.v_total_mb = profile_.v_total_mb;
  load.v_remaining_mb = std::clamp(remaining_mb_(), 0.0, profile_.v_total_mb);
  load.l_disk_io = clamp_pct(io);
  load.c_cpu = clamp_pct(cpu);
  load.r_mem = clamp_pct(mem);
  load.sampled_at = now;
  return load;
}

void NodeAgent::start_reporting(std::string controller_ip, SendFn send, TimeMs first_tick, TimeMs interval_ms) {
  if (!(interval_ms > 0.0)) throw Error("report interval must be positive");
  controller_ip_ = std::move(controller_ip);
  send_ = std::move(send);
  interval_ms_ = interval_ms;
  engine_.schedule_at(first_tick, "report_tick", profile_.node, "", [this] { self_report_tick(); });
}

void NodeAgent::self_report_tick() {
  ++ticks_;
  ReportPacket packet{ip_, controller_ip_, encode_report(sample_load())};
  if (send_) send_(packet);
  engine_.schedule_in(interval_ms_, "report_tick", profile_.node, "", [this] { self_report_tick(); });
}

}  // namespace edgesim
