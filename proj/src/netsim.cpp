#include "edgesim/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace edgesim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string format_trace_line(const TraceRecord& r) {
  return fmt_ms(r.time) + "," + r.kind + "," + r.subject + "," + r.detail;
}

std::string format_trace(const std::vector<TraceRecord>& records) {
  std::string out;
  for (const TraceRecord& r : records) {
    out += format_trace_line(r);
    out += '\n';
  }
  return out;
}

Engine::Engine(Topology topology, std::uint64_t seed)
    : topology_(std::move(topology)), rng_(seed) {
  channels_.resize(topology_.links.size() * 2);
  for (LinkId l = 0; l < topology_.links.size(); ++l) {
    for (int dir = 0; dir < 2; ++dir) {
      channels_[2 * l + dir].capacity_mbps = topology_.links[l].capacity_mbps;
      channels_[2 * l + dir].loss = topology_.links[l].loss;
    }
  }
}

Engine::EventId Engine::schedule_at(TimeMs t, std::string kind, std::string subject,
                                    std::string detail, Action action) {
  if (t < now_) t = now_;
  EventId id = next_seq_++;
  queue_.push(Event{t, id, std::move(kind), std::move(subject), std::move(detail), std::move(action)});
  return id;
}

void Engine::cancel(EventId id) { cancelled_.insert(id); }

bool Engine::pop_and_fire() {
  Event ev = queue_.top();
  queue_.pop();
  if (auto it = cancelled_.find(ev.seq); it != cancelled_.end()) {
    cancelled_.erase(it);
    return false;
  }
  now_ = ev.time;
  if (!ev.kind.empty()) trace_.push_back(TraceRecord{ev.time, ev.kind, ev.subject, ev.detail});
  if (ev.action) ev.action();
  return true;
}

std::vector<TraceRecord> Engine::run_until(TimeMs t) {
  if (t < now_) throw Error("run_until: target time precedes the current clock");
  const std::size_t first = trace_.size();
  while (!queue_.empty() && queue_.top().time <= t) pop_and_fire();
  now_ = t;
  return {trace_.begin() + static_cast<std::ptrdiff_t>(first), trace_.end()};
}

bool Engine::run_while(const std::function<bool()>& keep_going, TimeMs deadline) {
  while (keep_going()) {
    if (queue_.empty() || queue_.top().time > deadline) return false;
    pop_and_fire();
  }
  return true;
}

std::vector<std::size_t> Engine::path_channels(const SwitchId& from, const SwitchId& to,
                                               const Path& path) const {
  std::vector<std::size_t> out;
  SwitchId cur = from;
  for (LinkId l : path) {
    if (l >= topology_.links.size()) throw InvalidPathError("path references unknown link");
    const Link& link = topology_.links[l];
    if (!link.touches(cur)) {
      throw InvalidPathError("path is not contiguous at switch '" + cur + "' (link " + link.name() + ")");
    }
    out.push_back(2 * l + (cur == link.a ? 0 : 1));
    cur = link.other(cur);
  }
  if (cur != to) throw InvalidPathError("path ends at '" + cur + "', expected '" + to + "'");
  return out;
}

double Engine::path_delay_ms(const Path& path) const {
  double d = 2.0 * topology_.access_delay_ms;
  for (LinkId l : path) d += topology_.links.at(l).delay_ms;
  return d;
}

std::size_t Engine::disk_resource(const HostId& node) {
  auto [it, inserted] = disk_index_.try_emplace(node, disk_capacity_.size());
  if (inserted) disk_capacity_.push_back(kInf);
  return channels_.size() + it->second;
}

FlowId Engine::start_flow(const HostId& src, const HostId& dst, Bytes bytes, const Path& path,
                          FlowOptions options, CompletionFn on_complete) {
  const Host& s = topology_.host(src);
  const Host& d = topology_.host(dst);
  if (bytes == 0) throw SemanticError("start_flow: byte count must be positive");
  auto chans = path_channels(s.attached_switch, d.attached_switch, path);

  advance_to(now_);
  const FlowId id = next_flow_++;
  flows_[id] = Flow{id, src, dst, bytes, path, now_, std::nullopt};
  if (on_complete) completions_[id] = std::move(on_complete);

  Transfer t;
  t.id = id;
  t.channels = chans;
  t.resources = chans;
  t.remaining = static_cast<double>(bytes);
  t.disk_node = options.disk_node;
  if (options.disk_node) t.resources.push_back(disk_resource(*options.disk_node));
  active_.emplace(id, std::move(t));

  trace_.push_back(TraceRecord{now_, "flow_start", "flow" + std::to_string(id),
                               src + ">" + dst + ";bytes=" + std::to_string(bytes)});
  recompute_rates();
  reschedule_finishes();
  return id;
}

const Flow& Engine::flow(FlowId id) const {
  auto it = flows_.find(id);
  if (it == flows_.end()) throw SemanticError("unknown flow " + std::to_string(id));
  return it->second;
}

double Engine::flow_rate_mbps(FlowId id) const {
  auto it = active_.find(id);
  return it == active_.end() ? 0.0 : it->second.rate_mbps;
}

std::size_t Engine::active_flow_count() const {
  return static_cast<std::size_t>(
      std::count_if(active_.begin(), active_.end(), [](const auto& kv) { return !kv.second.cross; }));
}

void Engine::deliver(Channel& ch, double bytes) {
  ch.tx += bytes;
  if (ch.loss <= 0.0) {
    ch.rx += bytes;
    return;
  }
  ch.pending += bytes;
  const double quanta = std::floor(ch.pending / kLossQuantumBytes);
  if (quanta < 1.0) return;
  ch.pending -= quanta * kLossQuantumBytes;
  if (ch.loss >= 1.0) return;
  std::binomial_distribution<long long> draw(static_cast<long long>(quanta), 1.0 - ch.loss);
  ch.rx += static_cast<double>(draw(rng_)) * kLossQuantumBytes;
}

void Engine::advance_to(TimeMs t) {
  const double dt = t - integrated_to_;
  if (dt <= 0.0) return;
  for (auto& [id, tr] : active_) {
    if (tr.rate_mbps <= 0.0) continue;
    double bytes = std::isfinite(tr.rate_mbps) ? mbps_to_bytes_per_ms(tr.rate_mbps) * dt : tr.remaining;
    if (!tr.cross) {
      bytes = std::min(bytes, tr.remaining);
      tr.remaining -= bytes;
    }
    for (std::size_t c : tr.channels) deliver(channels_[c], bytes);
  }
  integrated_to_ = t;
}

void Engine::recompute_rates() {
  const std::size_t n_res = channels_.size() + disk_capacity_.size();
  std::vector<double> cap_left(n_res);
  std::vector<int> users(n_res, 0);
  for (std::size_t c = 0; c < channels_.size(); ++c) cap_left[c] = channels_[c].capacity_mbps;
  for (std::size_t k = 0; k < disk_capacity_.size(); ++k) cap_left[channels_.size() + k] = disk_capacity_[k];

  std::vector<Transfer*> unfrozen;
  for (auto& [id, tr] : active_) {
    tr.rate_mbps = 0.0;
    unfrozen.push_back(&tr);
    for (std::size_t r : tr.resources) ++users[r];
  }

  // Progressive filling: all unfrozen transfers share one rising level.
  while (!unfrozen.empty()) {
    double level = kInf;
    for (std::size_t r = 0; r < n_res; ++r) {
      if (users[r] > 0 && std::isfinite(cap_left[r])) level = std::min(level, cap_left[r] / users[r]);
    }
    for (const Transfer* tr : unfrozen) level = std::min(level, tr->cap_mbps);
    if (!std::isfinite(level)) {
      for (Transfer* tr : unfrozen) tr->rate_mbps = kInf;
      break;
    }
    level = std::max(level, 0.0);
    const double tol = 1e-12 * std::max(1.0, level);

    std::vector<bool> saturated(n_res, false);
    for (std::size_t r = 0; r < n_res; ++r) {
      saturated[r] = users[r] > 0 && std::isfinite(cap_left[r]) && cap_left[r] / users[r] <= level + tol;
    }
    std::vector<Transfer*> still;
    std::vector<Transfer*> frozen;
    for (Transfer* tr : unfrozen) {
      bool freeze = tr->cap_mbps <= level + tol;
      for (std::size_t r : tr->resources) freeze = freeze || saturated[r];
      (freeze ? frozen : still).push_back(tr);
    }
    for (Transfer* tr : frozen) {
      tr->rate_mbps = level;
      for (std::size_t r : tr->resources) {
        cap_left[r] = std::max(0.0, cap_left[r] - level);
        --users[r];
      }
    }
    unfrozen = std::move(still);
  }
}

void Engine::reschedule_finishes() {
  for (auto& [id, tr] : active_) {
    if (tr.cross) continue;
    if (tr.finish_event) {
      cancel(*tr.finish_event);
      tr.finish_event.reset();
    }
    if (tr.rate_mbps <= 0.0) continue;  // stalled until capacity returns
    double when = now_;
    if (std::isfinite(tr.rate_mbps)) when += tr.remaining / mbps_to_bytes_per_ms(tr.rate_mbps);
    const FlowId fid = id;
    tr.finish_event = schedule_at(when, "", "", "", [this, fid] { finish_transmission(fid); });
  }
}

void Engine::finish_transmission(FlowId id) {
  advance_to(now_);
  auto it = active_.find(id);
  if (it == active_.end()) return;
  // Float residue from the rate integration goes out with the final quantum.
  if (it->second.remaining > 0.0) {
    for (std::size_t c : it->second.channels) deliver(channels_[c], it->second.remaining);
  }
  active_.erase(it);
  recompute_rates();
  reschedule_finishes();

  const Flow& f = flows_.at(id);
  const double delay = path_delay_ms(f.path);
  schedule_in(delay, "flow_complete", "flow" + std::to_string(id),
              f.src + ">" + f.dst + ";bytes=" + std::to_string(f.bytes), [this, id] {
                Flow& done = flows_.at(id);
                done.completed_at = now_;
                auto cb = completions_.find(id);
                if (cb != completions_.end()) {
                  CompletionFn fn = std::move(cb->second);
                  completions_.erase(cb);
                  fn(done);
                }
              });
}

PortCounters Engine::read_port_counters(const SwitchId& sw, LinkId link) {
  if (link >= topology_.links.size()) throw SemanticError("read_port_counters: unknown link");
  const Link& l = topology_.links[link];
  if (!l.touches(sw)) throw SemanticError("read_port_counters: link " + l.name() + " not incident to '" + sw + "'");
  advance_to(now_);
  const Channel& out = channels_[2 * link + (sw == l.a ? 0 : 1)];
  const Channel& in = channels_[2 * link + (sw == l.a ? 1 : 0)];
  auto whole = [](double v) { return static_cast<Bytes>(std::floor(v + 1e-6)); };
  return PortCounters{whole(out.tx), whole(in.rx), now_};
}

double Engine::jitter_draw(double half_width) {
  if (half_width <= 0.0) return 0.0;
  std::uniform_real_distribution<double> u(-half_width, half_width);
  return u(rng_);
}

double Engine::control_channel_rtt(const SwitchId& /*sw*/) {
  return std::max(0.0, 2.0 * topology_.control_channel_delay_ms + jitter_draw(topology_.control_channel_jitter_ms));
}

double Engine::control_channel_one_way(const SwitchId& /*sw*/) {
  return std::max(0.0, topology_.control_channel_delay_ms + jitter_draw(0.5 * topology_.control_channel_jitter_ms));
}

void Engine::inject_cross_traffic(const CrossTraffic& spec) {
  if (spec.rate_mbps < 0.0) throw SemanticError("cross traffic rate must be non-negative");
  if (spec.duration < 0.0) throw SemanticError("cross traffic duration must be non-negative");
  if (spec.link >= topology_.links.size()) throw SemanticError("cross traffic on unknown link");
  const Link& l = topology_.links[spec.link];
  const SwitchId from = spec.from.empty() ? l.a : spec.from;
  if (!l.touches(from)) throw SemanticError("cross traffic sender '" + from + "' not on link " + l.name());

  std::optional<HostId> disk = spec.disk_node;
  if (disk && topology_.host(*disk).role != HostRole::storage) {
    throw SemanticError("cross traffic disk target '" + *disk + "' is not a storage host");
  }

  const FlowId id = next_flow_++;
  const std::size_t chan = 2 * spec.link + (from == l.a ? 0 : 1);
  const double rate = spec.rate_mbps;
  const std::string subject = "cross" + std::to_string(id);
  std::string detail = l.name() + ";from=" + from + ";rate_mbps=" + fmt_ms(rate);
  if (disk) detail += ";disk=" + *disk;

  const TimeMs start = std::max(spec.start, now_);
  schedule_at(start, "cross_start", subject, detail, [this, id, chan, rate, disk] {
    advance_to(now_);
    Transfer t;
    t.id = id;
    t.cross = true;
    t.channels = {chan};
    t.resources = {chan};
    if (disk) t.resources.push_back(disk_resource(*disk));
    t.disk_node = disk;
    t.cap_mbps = rate;
    active_.emplace(id, std::move(t));
    recompute_rates();
    reschedule_finishes();
  });
  schedule_at(start + spec.duration, "cross_end", subject, detail, [this, id] {
    advance_to(now_);
    active_.erase(id);
    recompute_rates();
    reschedule_finishes();
  });
}

void Engine::set_link_capacity(LinkId link, double mbps) {
  if (link >= topology_.links.size()) throw SemanticError("set_link_capacity: unknown link");
  if (!(mbps > 0.0)) throw SemanticError("set_link_capacity: capacity must be positive");
  advance_to(now_);
  channels_[2 * link].capacity_mbps = mbps;
  channels_[2 * link + 1].capacity_mbps = mbps;
  recompute_rates();
  reschedule_finishes();
}

void Engine::set_disk_capacity(const HostId& node, double mbps) {
  const std::size_t r = disk_resource(node) - channels_.size();
  if (disk_capacity_[r] == mbps) return;
  advance_to(now_);
  disk_capacity_[r] = std::max(0.0, mbps);
  recompute_rates();
  reschedule_finishes();
}

std::optional<double> Engine::disk_capacity(const HostId& node) const {
  auto it = disk_index_.find(node);
  if (it == disk_index_.end() || !std::isfinite(disk_capacity_[it->second])) return std::nullopt;
  return disk_capacity_[it->second];
}

double Engine::disk_throughput_mbps(const HostId& node) const {
  double total = 0.0;
  for (const auto& [id, tr] : active_) {
    if (tr.disk_node && *tr.disk_node == node && std::isfinite(tr.rate_mbps)) total += tr.rate_mbps;
  }
  return total;
}

}  // namespace edgesim
