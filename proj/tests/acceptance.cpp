// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edgesim/chunkstore.hpp"
#include "edgesim/controller.hpp"
#include "edgesim/harness.hpp"
#include "edgesim/measurement.hpp"
#include "edgesim/node_agent.hpp"
#include "edgesim/selection.hpp"
#include "fixtures.hpp"
#include "oracles/brute_paths.hpp"
#include "oracles/naive_topsis.hpp"

using namespace edgesim;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int n, const char* title, const std::function<Verdict()>& body) {
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s criterion %d: %s -- %s\n", v.pass ? "PASS" : "FAIL", n, title, v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Realistic pools: capacities in MB, load percentages, P within its range.
CandidatePool random_pool(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CandidatePool pool;
  for (int i = 0; i < n; ++i) {
    const double total = 8192.0 + u(rng) * 120000.0;
    Candidate c;
    c.node = "n" + std::to_string(i);
    c.ip = "10.0.0." + std::to_string(10 + i);
    c.load = NodeLoad{c.node, total * u(rng), total, 100 * u(rng), 100 * u(rng), 100 * u(rng), 0.0};
    c.p = -2.0 + 3.0 * u(rng);
    pool.push_back(c);
  }
  return pool;
}

oracle::Matrix rows_of(const DecisionMatrix<double>& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(kAttributes));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (int j = 0; j < kAttributes; ++j) out[i][j] = m(i, j);
  return out;
}

Verdict topsis_oracle() {
  std::mt19937_64 rng(1001);
  const WeightVector w;
  const std::vector<double> wv{w.v, w.p, w.l, w.c, w.r};
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto m = build_decision_matrix(random_pool(rng, std::uniform_int_distribution<int>(2, 10)(rng)));
    const auto c = topsis_closeness(m, w);
    const auto ref = oracle::naive_closeness(rows_of(m), wv);
    for (Eigen::Index i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(c(i) - ref[i]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0, fmt("max |diff| %.3g over 1000 matrices in %.3f s", worst, secs)};
}

Verdict column_scale() {
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> kd(0.0, 1000.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    DecisionMatrix<double> m = build_decision_matrix(random_pool(rng, std::uniform_int_distribution<int>(2, 10)(rng)));
    const auto before = topsis_closeness(m, WeightVector{});
    double factor = kd(rng);
    if (factor == 0.0) factor = 1e-3;
    m.col(std::uniform_int_distribution<int>(0, kAttributes - 1)(rng)) *= factor;
    worst = std::max(worst, (topsis_closeness(m, WeightVector{}) - before).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, fmt("max |diff| %.3g over 1000 triples", worst)};
}

Verdict veto_conservation() {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<Bytes> size(1, 8ull * 1024 * kBytesPerMb);
  std::size_t violations = 0, refused = 0;
  for (int k = 0; k < 10000; ++k) {
    CandidatePool pool = random_pool(rng, std::uniform_int_distribution<int>(1, 10)(rng));
    for (Candidate& c : pool)
      if (std::uniform_int_distribution<int>(0, 2)(rng) == 0)
        c.load.v_remaining_mb = c.load.v_total_mb * std::uniform_real_distribution<double>(0.0, 0.0499)(rng);
    const Bytes total = size(rng);
    try {
      const SelectionResult r = select_nodes({"f.bin", total}, pool, WeightVector{});
      if (r.plan.allocated() != total) ++violations;
      for (const ChunkEntry& e : r.plan.entries) {
        const auto it = std::find_if(pool.begin(), pool.end(), [&](const Candidate& c) { return c.node == e.node; });
        if (it == pool.end() || vetoed(it->load)) ++violations;
      }
    } catch (const RefusedError&) {
      ++refused;
      if (!std::all_of(pool.begin(), pool.end(), [](const Candidate& c) { return vetoed(c.load); })) ++violations;
    }
  }
  return {violations == 0, fmt("%.0f violations, %.0f all-vetoed refusals over 10000 pools", double(violations), double(refused))};
}

Verdict measurement_recovery() {
  std::ostringstream detail;
  bool ok = true;

  Engine bw_engine(fixtures::pair(100.0), 1004);
  bw_engine.inject_cross_traffic(CrossTraffic{0, "s1", 10.0, 0.0, 1e9});
  bw_engine.run_until(100.0);
  const LinkState bw = snapshot_all_links(bw_engine, 1000.0).links[0];
  ok = ok && std::abs(bw.bw_used_mbps - 10.0) <= 0.5 && bw.bw_used_mbps + bw.bw_remain_mbps == 100.0;
  detail << "used " << bw.bw_used_mbps << " remain " << bw.bw_remain_mbps;

  const double d = 7.0, j = 0.5;
  Engine delay_engine(fixtures::pair(100.0, d, 0.0, 2.0, j), 1005);
  LinkMonitor monitor(delay_engine);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 5000; ++i) {
    const double est = delay_from_probe(monitor.probe_delay(0));
    lo = std::min(lo, est);
    hi = std::max(hi, est);
  }
  ok = ok && lo >= d - 2 * j && hi <= d + 2 * j;
  detail << "; delay in [" << lo << ", " << hi << "] for d=7 j=0.5";

  Engine loss_engine(fixtures::pair(1000.0, 0.0, 0.05), 1006);
  loss_engine.inject_cross_traffic(CrossTraffic{0, "s1", 200.0, 0.0, 1e9});
  loss_engine.run_until(100.0);
  const PortCounters a0 = loss_engine.read_port_counters("s1", 0);
  const LinkState loss = snapshot_all_links(loss_engine, 1000.0).links[0];
  const PortCounters a1 = loss_engine.read_port_counters("s1", 0);
  const double quanta = static_cast<double>(a1.tx_bytes - a0.tx_bytes) / kLossQuantumBytes;
  ok = ok && quanta >= 1e4 && std::abs(loss.loss - 0.05) <= 0.01;
  detail << "; loss " << loss.loss << " over " << static_cast<long long>(quanta) << " quanta";
  return {ok, detail.str()};
}

Verdict routing_optimality() {
  std::mt19937_64 rng(1007);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto t0 = Clock::now();
  int mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 7)(rng);
    std::vector<std::string> sw;
    for (int i = 0; i < n; ++i) sw.push_back("s" + std::to_string(i + 1));
    std::vector<std::pair<int, int>> ends;
    for (int i = 1; i < n; ++i) ends.push_back({std::uniform_int_distribution<int>(0, i - 1)(rng), i});
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (u(rng) < 0.4 && std::find(ends.begin(), ends.end(), std::make_pair(a, b)) == ends.end()) ends.push_back({a, b});
    std::vector<fixtures::LinkSpec> links;
    for (auto [a, b] : ends) links.push_back({sw[a], sw[b], 100 + 900 * u(rng), 5 * u(rng), 0.02 * u(rng)});
    const int s = std::uniform_int_distribution<int>(0, n - 1)(rng);
    const int t = (s + std::uniform_int_distribution<int>(1, n - 1)(rng)) % n;
    const Topology topo = fixtures::make(sw, links,
                                         {{"ctl", "10.0.0.1", "controller", sw[0]}, {"src", "10.0.0.2", "client", sw[s]},
                                          {"dst", "10.0.0.3", "storage", sw[t]}});
    LinkSnapshot snap;
    for (LinkId l = 0; l < topo.links.size(); ++l)
      snap.links.push_back({l, 0.0, topo.links[l].capacity_mbps * u(rng), topo.links[l].delay_ms, topo.links[l].loss, 0.0});
    const auto costs = edge_costs(snap);
    std::vector<oracle::Edge> edges;
    for (std::size_t l = 0; l < ends.size(); ++l)
      edges.push_back({static_cast<std::size_t>(ends[l].first), static_cast<std::size_t>(ends[l].second), costs[l]});
    const double best = oracle::min_simple_path_cost(static_cast<std::size_t>(n), edges, s, t);
    const Route r = compute_route(topo, "src", "dst", snap);
    if (r.cost != best || path_cost(r.path, costs) != r.cost) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, fmt("%.0f mismatches over 100 topologies in %.3f s", mismatches, secs)};
}

// Full experiment matrix shared by criteria 6, 7 and 9.
struct Matrix {
  std::map<std::string, std::vector<ModeRun>> runs;  // by scenario id
  double seconds = 0.0;
};

Matrix& experiment() {
  static Matrix m = [] {
    Matrix out;
    const auto t0 = Clock::now();
    for (const char* name : {"scenario_normal.json", "scenario_stressed.json"}) {
      const Scenario s = load_scenario_file(fixtures::config_path(name));
      const Topology t = load_topology_file(s.topology_path);
      out.runs[s.id] = run_scenario(s, t);
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return m;
}

const ModeRun& run_of(const std::string& scenario, Mode mode) {
  for (const ModeRun& r : experiment().runs.at(scenario))
    if (r.mode == mode) return r;
  throw Error("missing mode run");
}

double mean_ms(const ModeRun& r, Bytes size) {
  double sum = 0.0;
  int n = 0;
  for (const MetricsRow& row : r.rows)
    if (row.file_bytes == size) {
      sum += row.write_time_ms;
      ++n;
    }
  return n ? sum / n : std::nan("");
}

std::map<HostId, double> shares(const ModeRun& r) {
  std::map<HostId, double> out;
  double total = 0.0;
  for (const MetricsRow& row : r.rows)
    for (const auto& [node, b] : row.chunks) {
      out[node] += static_cast<double>(b);
      total += static_cast<double>(b);
    }
  for (auto& [node, v] : out) v /= total;
  return out;
}

Verdict directional() {
  const Matrix& m = experiment();
  const ModeRun& edws = run_of("stressed", Mode::edws);
  const ModeRun& teds = run_of("stressed", Mode::teds);
  const double e100 = mean_ms(edws, 100 * kBytesPerMb), t100 = mean_ms(teds, 100 * kBytesPerMb);
  const double e10 = mean_ms(edws, 10 * kBytesPerMb), t10 = mean_ms(teds, 10 * kBytesPerMb);
  std::size_t rows = 0;
  for (const auto& [id, runs] : m.runs)
    for (const ModeRun& r : runs) rows += r.rows.size();
  const bool ok = e100 <= 0.9 * t100 && e10 <= t10 && rows == 3 * 30 * 2 * 2 && m.seconds < 60.0;
  std::string d = fmt("100 MB EDWS %.1f ms vs TEDS %.1f ms; 10 MB EDWS %.1f vs TEDS %.1f", e100, t100, e10, t10);
  d += fmt("; %.0f rows in %.2f s", double(rows), m.seconds);
  return {ok, d};
}

Verdict reallocation() {
  const auto calm_e = shares(run_of("normal", Mode::edws));
  const auto hot_e = shares(run_of("stressed", Mode::edws));
  const auto calm_t = shares(run_of("normal", Mode::teds));
  const auto hot_t = shares(run_of("stressed", Mode::teds));
  const double before = calm_e.count("node2") ? calm_e.at("node2") : 0.0;
  const double after = hot_e.count("node2") ? hot_e.at("node2") : 0.0;
  const bool ok = after < before && calm_t == hot_t;
  return {ok, fmt("EDWS node2 share %.4f -> %.4f under stress; TEDS shares ", before, after) +
                  (calm_t == hot_t ? "identical" : "differ")};
}

Verdict determinism() {
  const Scenario s = load_scenario_file(fixtures::config_path("scenario_stressed.json"));
  const Topology t = load_topology_file(s.topology_path);
  const auto a = run_scenario(s, t);
  const auto b = run_scenario(s, t);
  bool same = format_csv(collect_rows(a)) == format_csv(collect_rows(b));
  std::size_t trace_bytes = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].trace == b[i].trace && a[i].link_states_csv == b[i].link_states_csv &&
           a[i].decisions == b[i].decisions;
    trace_bytes += a[i].trace.size();
  }
  return {same, fmt("two runs, seed %.0f: CSV and %.0f trace bytes ", double(s.seed), double(trace_bytes)) +
                    (same ? "identical" : "differ")};
}

Verdict duality() {
  std::size_t stores = 0, bad = 0;
  for (Mode mode : {Mode::edws, Mode::teds}) {
    for (const MetricsRow& row : run_of("stressed", mode).rows) {
      ++stores;
      if (!row.pull_ok || row.pulled_bytes != row.file_bytes || row.refusals != 0) ++bad;
    }
  }
  return {bad == 0 && stores > 0, fmt("%.0f of %.0f stressed-scenario pulls verified byte-exact", double(stores - bad), double(stores))};
}

Verdict freshness() {
  const Scenario s = load_scenario_file(fixtures::config_path("scenario_stressed.json"));
  const Topology topo = load_topology_file(s.topology_path);
  Engine engine(topo, s.seed);
  Controller ctrl(engine, s.controller, topsis_policy(s.weights));
  std::vector<std::unique_ptr<NodeStore>> stores;
  std::vector<std::unique_ptr<NodeAgent>> agents;
  std::size_t idx = 0;
  for (const Host* h : topo.storage_hosts()) {
    const NodeProfile p = default_node_profile(h->id, idx++);
    stores.push_back(std::make_unique<NodeStore>(h->id, p.v_total_mb, p.v_remaining_mb));
    NodeStore* st = stores.back().get();
    ctrl.attach_store(*st);
    agents.push_back(std::make_unique<NodeAgent>(engine, p, h->ip, [st] { return st->v_remaining_mb(); }));
  }
  for (const StressProfile& sp : s.stress)
    for (auto& a : agents)
      if (a->node() == sp.node) a->add_stress(sp);
  for (auto& a : agents)
    a->start_reporting(topo.controller().ip, [&ctrl](const ReportPacket& p) { ctrl.send_from_host(p); });
  ctrl.start_monitoring();

  // settle past the first report, then watch 60 s at 10 ms resolution
  engine.run_until(100.0);
  double worst = 0.0;
  bool complete = true;
  for (TimeMs t = 100.0; t <= 60100.0; t += 10.0) {
    engine.run_until(t);
    const auto aged = ctrl.pool().query_nodes(engine.now());
    complete = complete && aged.size() == agents.size();
    for (const auto& a : aged) worst = std::max(worst, a.age);
  }
  return {complete && worst <= 6000.0, fmt("oldest newest-sample age %.3f ms over 60 s (limit 6000)", worst)};
}

}  // namespace

int main() {
  report(1, "TOPSIS matches the loop oracle", topsis_oracle);
  report(2, "column-scale invariance", column_scale);
  report(3, "veto and byte conservation", veto_conservation);
  report(4, "measurement recovery", measurement_recovery);
  report(5, "routing optimality", routing_optimality);
  report(6, "EDWS faster than TEDS under stress", directional);
  report(7, "stressed node loses share, TEDS unchanged", reallocation);
  report(8, "determinism", determinism);
  report(9, "store/pull duality", duality);
  report(10, "report freshness", freshness);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
