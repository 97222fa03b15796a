#include "edgesim/controller.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace edgesim {

// ---------------------------------------------------------------------------
// Routing

std::vector<double> edge_costs(const LinkSnapshot& states, const RouteWeights& w) {
  const Eigen::Index n = static_cast<Eigen::Index>(states.links.size());
  if (n == 0) return {};
  Eigen::VectorXd bw(n), delay(n), loss(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const LinkState& s = states.links[static_cast<std::size_t>(i)];
    bw(i) = s.bw_remain_mbps;
    delay(i) = s.delay_ms;
    loss(i) = std::clamp(s.loss, 0.0, 1.0);
  }
  const Eigen::VectorXd cost = w.bandwidth * (1.0 - min_max_scale(bw).array()).matrix() +
                               w.delay * min_max_scale(delay) + w.loss * loss;
  return {cost.data(), cost.data() + n};
}

double path_cost(const Path& path, std::span<const double> costs) {
  double total = 0.0;
  for (LinkId l : path) total += costs[l];
  return total;
}

Route compute_route(const Topology& topology, const HostId& src, const HostId& dst, const LinkSnapshot& states,
                    const RouteWeights& weights) {
  if (src == dst) throw Error("compute_route: source and destination are the same host");
  if (states.links.size() != topology.links.size()) throw Error("compute_route: link states do not cover the topology");
  const SwitchId& from = topology.host(src).attached_switch;
  const SwitchId& to = topology.host(dst).attached_switch;
  if (from == to) return Route{{}, {from}, 0.0};

  // Ranks follow id order so integer sequences compare like id sequences.
  std::vector<SwitchId> ids = topology.switches;
  std::sort(ids.begin(), ids.end());
  auto rank = [&](const SwitchId& s) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), s) - ids.begin());
  };
  const std::size_t n = ids.size();
  std::vector<std::vector<std::pair<std::size_t, LinkId>>> adj(n);
  for (LinkId l = 0; l < topology.links.size(); ++l) {
    const std::size_t a = rank(topology.links[l].a);
    const std::size_t b = rank(topology.links[l].b);
    adj[a].push_back({b, l});
    adj[b].push_back({a, l});
  }
  const std::vector<double> costs = edge_costs(states, weights);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<std::vector<std::size_t>> seq(n);
  std::vector<Path> links(n);
  std::vector<bool> done(n, false);
  const std::size_t s = rank(from);
  const std::size_t t = rank(to);
  dist[s] = 0.0;
  seq[s] = {s};

  auto better = [&](double c1, const std::vector<std::size_t>& q1, double c2, const std::vector<std::size_t>& q2) {
    if (c1 != c2) return c1 < c2;
    return q1 < q2;
  };

  while (true) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (done[v] || !std::isfinite(dist[v])) continue;
      if (u == n || better(dist[v], seq[v], dist[u], seq[u])) u = v;
    }
    if (u == n) throw UnreachableError("compute_route: '" + dst + "' unreachable from '" + src + "'");
    if (u == t) break;
    done[u] = true;
    for (const auto& [v, l] : adj[u]) {
      if (done[v]) continue;
      const double c = dist[u] + costs[l];
      std::vector<std::size_t> q = seq[u];
      q.push_back(v);
      if (!std::isfinite(dist[v]) || better(c, q, dist[v], seq[v])) {
        dist[v] = c;
        seq[v] = std::move(q);
        links[v] = links[u];
        links[v].push_back(l);
      }
    }
  }

  Route r;
  r.path = links[t];
  r.cost = dist[t];
  for (std::size_t i : seq[t]) r.switches.push_back(ids[i]);
  return r;
}

// ---------------------------------------------------------------------------
// Information pool

InformationPool::InformationPool(std::size_t history_bound) : bound_(history_bound) {
  if (bound_ == 0) throw Error("information pool history bound must be positive");
}

bool InformationPool::update(const LinkSnapshot& snapshot) {
  if (links_ && snapshot.measured_at <= links_->measured_at) return false;
  links_ = snapshot;
  history_.push_back(snapshot);
  while (history_.size() > bound_) history_.pop_front();
  return true;
}

bool InformationPool::update(const NodeLoad& load) {
  auto it = nodes_.find(load.node);
  if (it != nodes_.end() && load.sampled_at <= it->second.sampled_at) return false;
  nodes_[load.node] = load;
  return true;
}

std::optional<InformationPool::Aged<LinkSnapshot>> InformationPool::query_links(TimeMs now) const {
  if (!links_) return std::nullopt;
  return Aged<LinkSnapshot>{*links_, now - links_->measured_at};
}

std::vector<InformationPool::Aged<NodeLoad>> InformationPool::query_nodes(TimeMs now) const {
  std::vector<Aged<NodeLoad>> out;
  for (const auto& [id, load] : nodes_) out.push_back({load, now - load.sampled_at});
  return out;
}

// ---------------------------------------------------------------------------
// Flow table

void FlowTable::install(const std::string& src_ip, const std::string& dst_ip, FlowEntry entry) {
  entries_[{src_ip, dst_ip}] = std::move(entry);
}

const FlowEntry* FlowTable::find(const std::string& src_ip, const std::string& dst_ip) const {
  auto it = entries_.find({src_ip, dst_ip});
  return it == entries_.end() ? nullptr : &it->second;
}

bool FlowTable::invalidate(const std::string& src_ip, const std::string& dst_ip) {
  return entries_.erase({src_ip, dst_ip}) > 0;
}

// ---------------------------------------------------------------------------
// Store request wire format

std::string encode_store_request(const std::string& file_name, Bytes total_bytes) {
  return "STORE:" + file_name + ";" + std::to_string(total_bytes);
}

std::optional<StoreRequest> decode_store_request(std::string_view payload) {
  if (!payload.starts_with("STORE:")) return std::nullopt;
  payload.remove_prefix(6);
  const std::size_t sep = payload.rfind(';');
  if (sep == std::string_view::npos || sep == 0 || sep + 1 == payload.size()) return std::nullopt;
  std::string_view digits = payload.substr(sep + 1);
  Bytes bytes = 0;
  auto r = std::from_chars(digits.data(), digits.data() + digits.size(), bytes);
  if (r.ec != std::errc{} || r.ptr != digits.data() + digits.size() || bytes == 0) return std::nullopt;
  return StoreRequest{std::string(payload.substr(0, sep)), bytes};
}

// ---------------------------------------------------------------------------
// Controller

SelectionPolicy topsis_policy(WeightVector weights) {
  return [weights](const StoreRequest& request, std::span<const Candidate> pool) {
    return select_nodes(request, pool, weights).plan;
  };
}

struct Controller::PendingStore {
  StoreOutcome outcome;
  StoreCallback done;
  std::size_t outstanding = 0;
};

namespace {

// Controller's view before the first measurement: nominal capacity, no delay or loss.
LinkSnapshot nominal_snapshot(const Topology& t) {
  LinkSnapshot s;
  for (LinkId l = 0; l < t.links.size(); ++l) s.links.push_back({l, 0.0, t.links[l].capacity_mbps, 0.0, 0.0, 0.0});
  return s;
}

}  // namespace

Controller::Controller(Engine& engine, ControllerConfig config, SelectionPolicy policy)
    : engine_(engine), config_(config), policy_(std::move(policy)), pool_(config.history_bound) {
  if (!policy_) throw Error("controller needs a selection policy");
}

void Controller::attach_store(NodeStore& store) { stores_[store.node()] = &store; }

NodeStore& Controller::store_of(const HostId& node) {
  auto it = stores_.find(node);
  if (it == stores_.end()) throw SemanticError("no store attached for node '" + node + "'");
  return *it->second;
}

void Controller::start_monitoring() {
  monitor_ = std::make_unique<LinkMonitor>(engine_, config_.monitor);
  monitor_->start([this](const LinkSnapshot& s) { on_snapshot(s); });
}

void Controller::on_snapshot(const LinkSnapshot& snapshot) {
  if (snapshot_observer_) snapshot_observer_(snapshot);
  if (!pool_.update(snapshot)) return;
  const std::vector<double> costs = edge_costs(snapshot, config_.route_weights);
  std::vector<FlowTable::Key> stale;
  for (const auto& [key, entry] : flow_table_.entries()) {
    const double now_cost = path_cost(entry.path, costs);
    const double base = std::abs(entry.cost);
    const double change = base > 0.0 ? std::abs(now_cost - entry.cost) / base : (now_cost != 0.0 ? 1.0 : 0.0);
    if (change > config_.reroute_threshold) stale.push_back(key);
  }
  for (const auto& key : stale) flow_table_.invalidate(key.first, key.second);
}

double Controller::control_delay_from(const Host& host) {
  return engine_.topology().access_delay_ms + engine_.control_channel_one_way(host.attached_switch);
}

bool Controller::send_from_host(const Packet& packet) {
  const Topology& topo = engine_.topology();
  const Host* src = topo.find_host_by_ip(packet.src_ip);
  if (src == nullptr) {
    dropped_.push_back("unknown source ip " + packet.src_ip);
    return false;
  }
  if (flow_table_.find(packet.src_ip, packet.dst_ip) != nullptr) return false;
  engine_.schedule_in(control_delay_from(*src), "packet_in", src->id, packet.dst_ip,
                      [this, packet] { handle_packet_in(packet); });
  return true;
}

DispatchResult Controller::handle_packet_in(const Packet& packet) {
  ++packet_in_count_;
  const Topology& topo = engine_.topology();
  const Host* src = topo.find_host_by_ip(packet.src_ip);
  auto drop = [&](std::string why) {
    dropped_.push_back(why);
    return DispatchResult{DispatchKind::dropped, std::move(why), std::nullopt};
  };
  if (src == nullptr) return drop("unknown source ip " + packet.src_ip);

  if (packet.payload.starts_with("V=")) {
    auto it = stores_.find(src->id);
    const double v_total = it == stores_.end() ? 0.0 : it->second->v_total_mb();
    try {
      NodeLoad load = decode_report(packet.payload, ReportContext{src->id, v_total, engine_.now()});
      pool_.update(load);
      return {DispatchKind::report, src->id, std::nullopt};
    } catch (const MalformedPayload& e) {
      return drop(std::string("report from ") + src->id + ": " + e.what());
    }
  }

  if (packet.payload.starts_with("STORE:")) {
    auto request = decode_store_request(packet.payload);
    if (!request) return drop("malformed store request from " + src->id);
    on_store_packet(*src, request->file_name, request->total_bytes);
    return {DispatchKind::store, request->file_name, std::nullopt};
  }

  const Host* dst = topo.find_host_by_ip(packet.dst_ip);
  if (dst == nullptr) return drop("unknown destination ip " + packet.dst_ip);
  if (dst->id == src->id) return drop("packet addressed to its own source " + src->id);
  Route route = compute_route(src->id, dst->id);
  flow_table_.install(src->ip, dst->ip, FlowEntry{route.path, route.cost, engine_.now()});
  return {DispatchKind::route, src->id + ">" + dst->id, std::move(route)};
}

Route Controller::compute_route(const HostId& src, const HostId& dst) const {
  const Topology& topo = engine_.topology();
  if (const auto& latest = pool_.latest_links()) {
    return edgesim::compute_route(topo, src, dst, *latest, config_.route_weights);
  }
  return edgesim::compute_route(topo, src, dst, nominal_snapshot(topo), config_.route_weights);
}

StoreDecision Controller::handle_store_request(const HostId& client, const std::string& file_name,
                                               Bytes total_bytes) {
  const TimeMs now = engine_.now();
  const TimeMs limit = staleness_limit();
  const Topology& topo = engine_.topology();
  if (file_name.empty() || total_bytes == 0) throw Error("store request needs a file name and a positive size");

  auto links = pool_.query_links(now);
  if (!links || links->age > limit) throw RefusedError("stale pool: no link-state snapshot within the freshness window");

  CandidatePool pool;
  for (const auto& aged : pool_.query_nodes(now)) {
    if (aged.age > limit || !stores_.count(aged.value.node)) continue;
    const Host& h = topo.host(aged.value.node);
    pool.push_back(Candidate{h.id, h.ip, aged.value, 0.0});
  }
  if (pool.empty()) throw RefusedError("stale pool: no storage node reported within the freshness window");

  double local_bw = 0.0;
  for (const LinkState& s : links->value.links) local_bw = std::max(local_bw, s.bw_remain_mbps);
  std::vector<std::pair<HostId, PathMetrics>> metrics;
  for (const Candidate& c : pool) {
    Route r = edgesim::compute_route(topo, client, c.node, links->value, config_.route_weights);
    std::vector<LinkState> along;
    for (LinkId l : r.path) along.push_back(links->value.links[l]);
    metrics.emplace_back(c.node, aggregate_path(along, local_bw));
  }
  const std::vector<NetworkScore> scores = network_scores(metrics, config_.score);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].p = scores[i].p;

  return StoreDecision{policy_(StoreRequest{file_name, total_bytes}, pool), now};
}

void Controller::log_decision(const std::string& kind, const std::string& file, const ChunkPlan* plan,
                              const std::string& reason) {
  nlohmann::ordered_json j;
  j["time_ms"] = engine_.now();
  j["kind"] = kind;
  j["file"] = file;
  j["plan"] = nlohmann::ordered_json::array();
  if (plan != nullptr) {
    for (const ChunkEntry& e : plan->entries) j["plan"].push_back({{"node", e.node}, {"ip", e.ip}, {"bytes", e.bytes}});
  }
  if (!reason.empty()) j["reason"] = reason;
  decision_log_.push_back(j.dump());
}

void Controller::store_file(const HostId& client, const std::string& file_name, Bytes total_bytes,
                            StoreCallback done) {
  const Host& host = engine_.topology().host(client);
  const auto key = std::make_pair(client, file_name);
  if (pending_.count(key)) throw Error("a store of '" + file_name + "' from '" + client + "' is already in flight");

  auto st = std::make_shared<PendingStore>();
  st->outcome.client = client;
  st->outcome.file_name = file_name;
  st->outcome.total_bytes = total_bytes;
  st->outcome.requested_at = engine_.now();
  st->done = std::move(done);
  pending_[key] = st;
  send_from_host(Packet{host.ip, engine_.topology().controller().ip, encode_store_request(file_name, total_bytes)});
}

void Controller::on_store_packet(const Host& client, const std::string& file_name, Bytes total_bytes) {
  std::shared_ptr<PendingStore> st;
  if (auto it = pending_.find({client.id, file_name}); it != pending_.end()) {
    st = it->second;
  } else {
    st = std::make_shared<PendingStore>();
    st->outcome.client = client.id;
    st->outcome.file_name = file_name;
    st->outcome.total_bytes = total_bytes;
    st->outcome.requested_at = engine_.now();
    pending_[{client.id, file_name}] = st;
  }

  const double reply_delay = engine_.control_channel_one_way(client.attached_switch) + engine_.topology().access_delay_ms;
  try {
    st->outcome.decision = handle_store_request(client.id, file_name, total_bytes);
  } catch (const RefusedError& e) {
    st->outcome.refusal = e.what();
    log_decision("refusal", file_name, nullptr, e.what());
    engine_.schedule_in(reply_delay, "packet_out", client.id, "refusal;" + file_name,
                        [this, st] { finish_store(st); });
    return;
  }
  log_decision("decision", file_name, &st->outcome.decision->plan, "");
  engine_.schedule_in(reply_delay, "packet_out", client.id, "decision;" + file_name,
                      [this, st] { begin_transfers(st); });
}

void Controller::begin_transfers(std::shared_ptr<PendingStore> st) {
  const ChunkPlan& plan = st->outcome.decision->plan;
  st->outcome.index = to_index_record(plan);
  st->outcome.index_text = write_index(st->outcome.index);
  st->outstanding = plan.entries.size();

  const HostId client = st->outcome.client;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const HostId node = plan.entries[i].node;
    const Bytes bytes = plan.entries[i].bytes;
    const std::string chunk = st->outcome.index.entries[i].chunk_name;
    request_route(client, node, [this, st, client, node, bytes, chunk](const Path& path) {
      engine_.start_flow(client, node, bytes, path, FlowOptions{node}, [this, st, node, bytes, chunk](const Flow&) {
        try {
          store_of(node).store_chunk(chunk, bytes);
        } catch (const Error& e) {
          if (st->outcome.error.empty()) st->outcome.error = e.what();
        }
        if (--st->outstanding == 0) finish_store(st);
      });
    });
  }
}

void Controller::finish_store(const std::shared_ptr<PendingStore>& st) {
  st->outcome.completed_at = engine_.now();
  pending_.erase({st->outcome.client, st->outcome.file_name});
  if (st->done) st->done(st->outcome);
}

void Controller::request_route(const HostId& src, const HostId& dst, RouteCallback ready) {
  const Topology& topo = engine_.topology();
  const Host& s = topo.host(src);
  const Host& d = topo.host(dst);
  if (const FlowEntry* entry = flow_table_.find(s.ip, d.ip)) {
    ready(entry->path);
    return;
  }
  Packet first{s.ip, d.ip, "DATA"};
  engine_.schedule_in(control_delay_from(s), "packet_in", s.id, d.ip, [this, first, s, ready] {
    DispatchResult r = handle_packet_in(first);
    if (!r.route) throw Error("route request failed: " + r.detail);
    Path path = r.route->path;
    engine_.schedule_in(engine_.control_channel_one_way(s.attached_switch), "flow_mod", s.id, first.dst_ip,
                        [ready, path] { ready(path); });
  });
}

void Controller::handle_pull_request(const HostId& client, const IndexRecord& record, PullCallback done) {
  const Topology& topo = engine_.topology();
  std::vector<HostId> nodes;
  for (const IndexEntry& e : record.entries) {
    const Host* h = topo.find_host_by_ip(e.node_ip);
    auto it = h == nullptr ? stores_.end() : stores_.find(h->id);
    if (it == stores_.end() || !it->second->has_chunk(e.chunk_name)) {
      throw PullAborted(e.chunk_name, "pull aborted: chunk '" + e.chunk_name + "' not found on " + e.node_ip);
    }
    nodes.push_back(h->id);
  }

  struct PullState {
    PullOutcome outcome;
    std::size_t outstanding = 0;
    PullCallback done;
  };
  auto st = std::make_shared<PullState>();
  st->outcome.client = client;
  st->outcome.record = record;
  st->outcome.fetched.resize(record.entries.size());
  st->outcome.started_at = engine_.now();
  st->outstanding = record.entries.size();
  st->done = std::move(done);

  for (std::size_t i = 0; i < record.entries.size(); ++i) {
    const HostId node = nodes[i];
    const std::string chunk = record.entries[i].chunk_name;
    request_route(node, client, [this, st, i, node, client, chunk](const Path& path) {
      const Bytes bytes = store_of(node).fetch_chunk(chunk);
      engine_.start_flow(node, client, bytes, path, FlowOptions{node}, [this, st, i, chunk](const Flow& f) {
        st->outcome.fetched[i] = FetchedChunk{chunk, f.bytes};
        if (--st->outstanding == 0) {
          st->outcome.completed_at = engine_.now();
          st->outcome.verdict = verify_merge(st->outcome.record, st->outcome.fetched);
          if (st->done) st->done(st->outcome);
        }
      });
    });
  }
}

}  // namespace edgesim
