#include "edgesim/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "edgesim/chunkstore.hpp"
#include "edgesim/measurement.hpp"
#include "edgesim/netsim.hpp"
#include "json.hpp"

namespace edgesim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Mode mode) { return mode == Mode::edws ? "EDWS" : "TEDS"; }

std::optional<Mode> parse_mode(std::string_view text) {
  std::string t(text);
  for (char& ch : t) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (t == "EDWS") return Mode::edws;
  if (t == "TEDS") return Mode::teds;
  return std::nullopt;
}

ChunkPlan baseline_select(const StoreRequest& request, std::span<const Candidate> pool) {
  std::vector<double> weights;
  std::vector<PlanTarget> targets;
  for (const Candidate& c : pool) {
    if (vetoed(c.load)) continue;
    weights.push_back(std::max(0.0, c.load.v_remaining_mb));
    targets.push_back({c.node, c.ip});
  }
  if (targets.empty()) throw RefusedError("all candidate nodes vetoed");
  return allocate_chunks(weights, targets, request.total_bytes, request.file_name);
}

SelectionPolicy baseline_policy() {
  return [](const StoreRequest& request, std::span<const Candidate> pool) { return baseline_select(request, pool); };
}

// ---------------------------------------------------------------------------
// Scenario loading

namespace {

std::string id_of(const json& j, const char* what) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw ParseError(std::string(what) + " must be a string or integer");
}

double num(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ParseError(std::string("'") + key + "' must be a number");
  return it->get<double>();
}

// null or absent means "until the end".
double duration_of(const json& j, const char* key) {
  return num(j, key, std::numeric_limits<double>::infinity());
}

WeightVector weights_from(const json& j) {
  if (!j.is_object()) throw ParseError("weights must be an object");
  WeightVector w;
  w.v = num(j, "v", w.v);
  w.p = num(j, "p", w.p);
  w.l = num(j, "l", w.l);
  w.c = num(j, "c", w.c);
  w.r = num(j, "r", w.r);
  return w;
}

}  // namespace

WeightVector load_weights(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("weights: ") + e.what());
  }
  return weights_from(j);
}

Scenario load_scenario(std::string_view text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("scenario must be a JSON object");

  Scenario s;
  try {
    if (j.contains("id")) s.id = j.at("id").get<std::string>();
    const char* topo_key = j.contains("topology_path") ? "topology_path" : "topology";
    if (!j.contains(topo_key)) throw ParseError("scenario needs 'topology_path'");
    fs::path tp = j.at(topo_key).get<std::string>();
    if (tp.is_relative()) tp = fs::path(base_dir) / tp;
    s.topology_path = tp.lexically_normal().string();

    if (j.contains("file_sizes_mb")) {
      for (const json& v : j.at("file_sizes_mb")) {
        const double mb = v.get<double>();
        if (!(mb > 0.0)) throw ParseError("file sizes must be positive");
        s.file_sizes.push_back(static_cast<Bytes>(std::llround(mb * kBytesPerMb)));
      }
    }
    if (j.contains("file_sizes")) {
      for (const json& v : j.at("file_sizes")) {
        const auto b = v.get<long long>();
        if (b <= 0) throw ParseError("file sizes must be positive");
        s.file_sizes.push_back(static_cast<Bytes>(b));
      }
    }
    if (s.file_sizes.empty()) throw ParseError("scenario needs at least one file size");

    if (j.contains("repetitions")) {
      const auto r = j.at("repetitions").get<long long>();
      if (r <= 0) throw ParseError("repetitions must be positive");
      s.repetitions = static_cast<std::size_t>(r);
    }

    if (j.contains("mode")) {
      const std::string m = j.at("mode").get<std::string>();
      if (m == "both" || m == "BOTH") {
        s.modes = {Mode::edws, Mode::teds};
      } else if (auto parsed = parse_mode(m)) {
        s.modes = {*parsed};
      } else {
        throw ParseError("unknown mode '" + m + "'");
      }
    }
    if (j.contains("modes")) {
      s.modes.clear();
      for (const json& m : j.at("modes")) {
        auto parsed = parse_mode(m.get<std::string>());
        if (!parsed) throw ParseError("unknown mode '" + m.get<std::string>() + "'");
        s.modes.push_back(*parsed);
      }
      if (s.modes.empty()) throw ParseError("modes must not be empty");
    }

    for (const json& st : j.value("stress", json::array())) {
      StressProfile p;
      p.node = id_of(st.at("node"), "stress node");
      p.cpu_add = num(st, "cpu_add", p.cpu_add);
      p.mem_add = num(st, "mem_add", p.mem_add);
      p.io_add = num(st, "io_add", p.io_add);
      p.start = num(st, "start_ms", 0.0);
      p.duration = duration_of(st, "duration_ms");
      s.stress.push_back(p);
    }
    for (const json& ct : j.value("cross_traffic", json::array())) {
      CrossTrafficSpec c;
      c.a = id_of(ct.at("a"), "cross traffic endpoint");
      c.b = id_of(ct.at("b"), "cross traffic endpoint");
      if (ct.contains("from")) c.from = id_of(ct.at("from"), "cross traffic sender");
      c.rate_mbps = num(ct, "rate_mbps", 0.0);
      c.start = num(ct, "start_ms", 0.0);
      c.duration = duration_of(ct, "duration_ms");
      if (ct.contains("to_node")) c.to_node = id_of(ct.at("to_node"), "cross traffic target node");
      s.cross_traffic.push_back(c);
    }
    for (const json& le : j.value("link_events", json::array())) {
      LinkCapacityEvent e;
      e.a = id_of(le.at("a"), "link event endpoint");
      e.b = id_of(le.at("b"), "link event endpoint");
      e.at = num(le, "at_ms", 0.0);
      e.capacity_mbps = num(le, "capacity_mbps", 0.0);
      s.link_events.push_back(e);
    }

    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("weights")) s.weights = weights_from(j.at("weights"));
    if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
    for (const json& n : j.value("nodes", json::array())) {
      NodeProfile p;
      p.node = id_of(n.at("node"), "node");
      p.disk_rate_mbps = num(n, "disk_rate_mbps", p.disk_rate_mbps);
      p.v_total_mb = num(n, "v_total_mb", p.v_total_mb);
      p.v_remaining_mb = num(n, "v_remaining_mb", p.v_remaining_mb);
      p.base_cpu = num(n, "base_cpu", p.base_cpu);
      p.base_mem = num(n, "base_mem", p.base_mem);
      p.base_io = num(n, "base_io", p.base_io);
      s.nodes.push_back(p);
    }
    if (j.contains("client")) s.client = id_of(j.at("client"), "client");
    s.warmup_ms = num(j, "warmup_ms", s.warmup_ms);
    s.gap_ms = num(j, "gap_ms", s.gap_ms);
    if (j.contains("verify_pull")) s.verify_pull = j.at("verify_pull").get<bool>();

    if (j.contains("controller")) {
      const json& c = j.at("controller");
      ControllerConfig& cc = s.controller;
      cc.report_interval_ms = num(c, "report_interval_ms", cc.report_interval_ms);
      cc.monitor.poll_interval_ms = num(c, "poll_interval_ms", cc.monitor.poll_interval_ms);
      cc.staleness_intervals = num(c, "staleness_intervals", cc.staleness_intervals);
      cc.reroute_threshold = num(c, "reroute_threshold", cc.reroute_threshold);
      if (c.contains("scale_loss")) cc.score.scale_loss = c.at("scale_loss").get<bool>();
      if (c.contains("route_weights")) {
        const json& rw = c.at("route_weights");
        cc.route_weights.bandwidth = num(rw, "bandwidth", cc.route_weights.bandwidth);
        cc.route_weights.delay = num(rw, "delay", cc.route_weights.delay);
        cc.route_weights.loss = num(rw, "loss", cc.route_weights.loss);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }

  if (s.warmup_ms < 0.0 || s.gap_ms < 0.0) throw SemanticError("warmup_ms and gap_ms must be non-negative");
  if (!(s.controller.report_interval_ms > 0.0) || !(s.controller.monitor.poll_interval_ms > 0.0)) {
    throw SemanticError("report and poll intervals must be positive");
  }
  validate_weights(s.weights);
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read scenario '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str(), fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Runs

namespace {

constexpr TimeMs kOperationTimeoutMs = 3600.0 * 1000.0;

std::string file_name_for(Bytes bytes, std::size_t run) {
  return "file_" + std::to_string(bytes) + "_" + std::to_string(run) + ".dat";
}

}  // namespace

ModeRun run_mode(const Scenario& scenario, const Topology& topology, Mode mode) {
  ModeRun out;
  out.mode = mode;

  Engine engine(topology, scenario.seed);
  Controller ctrl(engine, scenario.controller,
                  mode == Mode::edws ? topsis_policy(scenario.weights) : baseline_policy());
  ctrl.set_snapshot_observer(
      [&](const LinkSnapshot& s) { out.link_states_csv += format_snapshot_csv(s, engine.topology()); });
  out.link_states_csv = snapshot_csv_header();

  const auto storage = topology.storage_hosts();
  for (const NodeProfile& p : scenario.nodes) {
    const Host* h = topology.find_host(p.node);
    if (h == nullptr || h->role != HostRole::storage) throw SemanticError("scenario node '" + p.node + "' is not a storage host");
  }

  std::vector<std::unique_ptr<NodeStore>> stores;
  std::vector<std::unique_ptr<NodeAgent>> agents;
  for (std::size_t i = 0; i < storage.size(); ++i) {
    const Host& h = *storage[i];
    NodeProfile profile = default_node_profile(h.id, i);
    for (const NodeProfile& p : scenario.nodes) {
      if (p.node == h.id) profile = p;
    }
    stores.push_back(std::make_unique<NodeStore>(h.id, profile.v_total_mb, profile.v_remaining_mb));
    NodeStore* store = stores.back().get();
    ctrl.attach_store(*store);
    agents.push_back(std::make_unique<NodeAgent>(engine, profile, h.ip, [store] { return store->v_remaining_mb(); }));
  }

  for (const StressProfile& st : scenario.stress) {
    bool found = false;
    for (auto& a : agents) {
      if (a->node() == st.node) {
        a->add_stress(st);
        found = true;
      }
    }
    if (!found) throw SemanticError("stress targets unknown storage node '" + st.node + "'");
  }
  for (const CrossTrafficSpec& c : scenario.cross_traffic) {
    auto link = topology.find_link(c.a, c.b);
    if (!link) throw SemanticError("cross traffic on unknown link " + c.a + "-" + c.b);
    CrossTraffic ct{*link, c.from, c.rate_mbps, c.start, c.duration, std::nullopt};
    if (!c.to_node.empty()) ct.disk_node = c.to_node;
    engine.inject_cross_traffic(ct);
  }
  for (const LinkCapacityEvent& e : scenario.link_events) {
    auto link = topology.find_link(e.a, e.b);
    if (!link) throw SemanticError("link event on unknown link " + e.a + "-" + e.b);
    const LinkId l = *link;
    const double cap = e.capacity_mbps;
    if (!(cap > 0.0)) throw SemanticError("link event capacity must be positive");
    engine.schedule_at(e.at, "link_capacity", topology.links[l].name(), std::to_string(cap),
                       [&engine, l, cap] { engine.set_link_capacity(l, cap); });
  }

  const std::string controller_ip = topology.controller().ip;
  for (auto& a : agents) {
    a->start_reporting(controller_ip, [&ctrl](const ReportPacket& p) { ctrl.send_from_host(p); }, 0.0,
                       scenario.controller.report_interval_ms);
  }
  ctrl.start_monitoring();

  HostId client = scenario.client;
  if (client.empty()) {
    for (const Host& h : topology.hosts) {
      if (h.role == HostRole::client) {
        client = h.id;
        break;
      }
    }
  }
  if (client.empty()) throw SemanticError("topology has no client host");
  if (topology.host(client).role != HostRole::client) throw SemanticError("'" + client + "' is not a client host");

  engine.run_until(scenario.warmup_ms);

  for (Bytes size : scenario.file_sizes) {
    for (std::size_t run = 0; run < scenario.repetitions; ++run) {
      const std::string file = file_name_for(size, run);
      std::optional<StoreOutcome> stored;
      ctrl.store_file(client, file, size, [&](const StoreOutcome& o) { stored = o; });
      engine.run_while([&] { return !stored.has_value(); }, engine.now() + kOperationTimeoutMs);
      if (!stored) throw Error("store of '" + file + "' did not complete");

      MetricsRow row;
      row.scenario_id = scenario.id;
      row.mode = mode;
      row.file_bytes = size;
      row.run_index = run;
      row.write_time_ms = stored->write_time_ms();
      if (!stored->refusal.empty()) {
        row.refusals = 1;
        out.warnings.push_back(file + ": " + stored->refusal);
      } else if (!stored->error.empty()) {
        out.warnings.push_back(file + ": " + stored->error);
      }
      if (stored->decision) {
        for (const ChunkEntry& e : stored->decision->plan.entries) row.chunks.emplace_back(e.node, e.bytes);
      }

      if (stored->ok()) {
        out.indexes.emplace_back(std::string(to_string(mode)) + "/run" + std::to_string(run) + "/" + file + ".txt",
                                 stored->index_text);
        if (scenario.verify_pull) {
          std::optional<PullOutcome> pulled;
          try {
            ctrl.handle_pull_request(client, stored->index, [&](const PullOutcome& p) { pulled = p; });
            engine.run_while([&] { return !pulled.has_value(); }, engine.now() + kOperationTimeoutMs);
            if (!pulled) throw Error("pull of '" + file + "' did not complete");
            row.pull_ok = pulled->verdict.ok;
            row.pull_reason = pulled->verdict.reason;
            for (const FetchedChunk& f : pulled->fetched) row.pulled_bytes += f.bytes;
          } catch (const PullAborted& e) {
            row.pull_reason = e.what();
          }
        }
        // Keep repetitions independent.
        for (std::size_t i = 0; i < stored->index.entries.size(); ++i) {
          ctrl.store_of(stored->decision->plan.entries[i].node).remove_chunk(stored->index.entries[i].chunk_name);
        }
      }
      out.rows.push_back(std::move(row));
      engine.run_until(engine.now() + scenario.gap_ms);
    }
  }

  out.trace = format_trace(engine.trace());
  out.decisions = ctrl.decision_log();
  return out;
}

std::vector<ModeRun> run_scenario(const Scenario& scenario, const Topology& topology) {
  std::vector<ModeRun> runs;
  for (Mode m : scenario.modes) runs.push_back(run_mode(scenario, topology, m));
  return runs;
}

std::vector<MetricsRow> collect_rows(std::span<const ModeRun> runs) {
  std::vector<MetricsRow> rows;
  for (const ModeRun& r : runs) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  return rows;
}

std::string format_csv(std::span<const MetricsRow> rows) {
  std::string out = "scenario,mode,file_bytes,run,write_time_ms,chunks,refusals\n";
  char buf[64];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.3f", r.write_time_ms);
    std::string chunks;
    for (const auto& [node, bytes] : r.chunks) {
      if (!chunks.empty()) chunks += '|';
      chunks += node + ":" + std::to_string(bytes);
    }
    out += r.scenario_id + "," + std::string(to_string(r.mode)) + "," + std::to_string(r.file_bytes) + "," +
           std::to_string(r.run_index) + "," + buf + "," + chunks + "," + std::to_string(r.refusals) + "\n";
  }
  return out;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << content;
  if (!f) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace

void emit_csv(std::span<const MetricsRow> rows, const std::string& path) {
  if (rows.empty()) throw Error("emit_csv: no rows");
  write_file(path, format_csv(rows));
}

std::string write_outputs(const Scenario& scenario, std::span<const ModeRun> runs, const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / scenario.id;
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw Error("cannot create output directory '" + dir.string() + "': " + e.what());
  }
  emit_csv(collect_rows(runs), (dir / "metrics.csv").string());
  for (const ModeRun& r : runs) {
    const std::string m(to_string(r.mode));
    write_file(dir / ("trace_" + m + ".csv"), "time_ms,event_kind,subject,detail\n" + r.trace);
    std::string nd;
    for (const std::string& line : r.decisions) nd += line + "\n";
    write_file(dir / ("decisions_" + m + ".ndjson"), nd);
    write_file(dir / ("link_states_" + m + ".csv"), r.link_states_csv);
    for (const auto& [rel, text] : r.indexes) write_file(dir / "indexes" / rel, text);
  }
  return dir.string();
}

}  // namespace edgesim
