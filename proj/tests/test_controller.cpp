#include <memory>
#include <random>

#include "doctest.h"
#include "edgesim/controller.hpp"
#include "fixtures.hpp"
#include "oracles/brute_paths.hpp"

using namespace edgesim;

namespace {

// Controller + client on s1, storage nodes spread over a small mesh.
Topology mesh(int storage = 3) {
  std::vector<fixtures::HostSpec> hosts{{"ctl", "10.0.0.1", "controller", "s1"}, {"cli", "10.0.0.2", "client", "s1"}};
  const char* sw[] = {"s2", "s3", "s4"};
  for (int i = 0; i < storage; ++i)
    hosts.push_back({"n" + std::to_string(i + 1), "10.0.0.1" + std::to_string(i + 1), "storage", sw[i % 3]});
  return fixtures::make({"s1", "s2", "s3", "s4"},
                        {{"s1", "s2", 1000, 1}, {"s1", "s3", 1000, 2}, {"s2", "s4", 1000, 1}, {"s3", "s4", 1000, 1}},
                        hosts, 1.0, 0.0);
}

struct Rig {
  Engine engine;
  Controller ctrl;
  std::vector<std::unique_ptr<NodeStore>> stores;
  std::vector<std::unique_ptr<NodeAgent>> agents;

  explicit Rig(Topology t, double remaining_fraction = 0.5, SelectionPolicy policy = topsis_policy({}))
      : engine(std::move(t), 9), ctrl(engine, ControllerConfig{}, std::move(policy)) {
    std::size_t idx = 0;
    for (const Host* h : engine.topology().storage_hosts()) {
      NodeProfile p = default_node_profile(h->id, idx++);
      p.v_remaining_mb = p.v_total_mb * remaining_fraction;
      stores.push_back(std::make_unique<NodeStore>(h->id, p.v_total_mb, p.v_remaining_mb));
      NodeStore* s = stores.back().get();
      ctrl.attach_store(*s);
      agents.push_back(std::make_unique<NodeAgent>(engine, p, h->ip, [s] { return s->v_remaining_mb(); }));
    }
  }

  void boot(TimeMs warmup = 6500.0) {
    const std::string ip = engine.topology().controller().ip;
    for (auto& a : agents) a->start_reporting(ip, [this](const ReportPacket& p) { ctrl.send_from_host(p); });
    ctrl.start_monitoring();
    engine.run_until(warmup);
  }

  StoreOutcome store(const std::string& name, Bytes bytes) {
    std::optional<StoreOutcome> out;
    ctrl.store_file("cli", name, bytes, [&](const StoreOutcome& o) { out = o; });
    REQUIRE(engine.run_while([&] { return !out; }, engine.now() + 3.6e6));
    return *out;
  }

  PullOutcome pull(const IndexRecord& rec) {
    std::optional<PullOutcome> out;
    ctrl.handle_pull_request("cli", rec, [&](const PullOutcome& o) { out = o; });
    REQUIRE(engine.run_while([&] { return !out; }, engine.now() + 3.6e6));
    return *out;
  }
};

}  // namespace

TEST_CASE("store request wire format") {
  CHECK(encode_store_request("a.bin", 42) == "STORE:a.bin;42");
  const auto r = decode_store_request("STORE:we;ird.bin;7");
  REQUIRE(r);
  CHECK(r->file_name == "we;ird.bin");
  CHECK(r->total_bytes == 7);
  CHECK_FALSE(decode_store_request("STORE:x;0"));
  CHECK_FALSE(decode_store_request("STORE:;5"));
  CHECK_FALSE(decode_store_request("STORE:x;"));
  CHECK_FALSE(decode_store_request("PUT:x;5"));
}

TEST_CASE("packet_in dispatch: reports land in the pool") {
  Rig rig(mesh());
  const DispatchResult r = rig.ctrl.handle_packet_in({"10.0.0.11", "10.0.0.1", "V=2048;L=35.0;C=42.5;R=60.0"});
  CHECK(r.kind == DispatchKind::report);
  const NodeLoad& l = rig.ctrl.pool().node_loads().at("n1");
  CHECK(l.v_remaining_mb == 2048.0);
  CHECK(l.v_total_mb == rig.stores[0]->v_total_mb());
  CHECK(l.c_cpu == 42.5);

  const DispatchResult bad = rig.ctrl.handle_packet_in({"10.0.0.11", "10.0.0.1", "V=1;L=500.0;C=1.0;R=1.0"});
  CHECK(bad.kind == DispatchKind::dropped);
  CHECK(rig.ctrl.dropped_packets().size() == 1);
  CHECK(rig.ctrl.handle_packet_in({"10.9.9.9", "10.0.0.1", "V=1"}).kind == DispatchKind::dropped);
}

TEST_CASE("packet_in dispatch: store requests") {
  Rig rig(mesh());
  CHECK(rig.ctrl.handle_packet_in({"10.0.0.2", "10.0.0.1", "STORE:f.bin;100"}).kind == DispatchKind::store);
  CHECK(rig.ctrl.handle_packet_in({"10.0.0.2", "10.0.0.1", "STORE:f.bin;zero"}).kind == DispatchKind::dropped);
}

TEST_CASE("table miss installs a route; later packets skip the controller") {
  Rig rig(mesh());
  const DispatchResult r = rig.ctrl.handle_packet_in({"10.0.0.2", "10.0.0.13", "DATA"});
  REQUIRE(r.kind == DispatchKind::route);
  REQUIRE(r.route);
  CHECK(r.route->switches.front() == "s1");
  CHECK(r.route->switches.back() == "s4");
  CHECK(rig.ctrl.flow_table().find("10.0.0.2", "10.0.0.13") != nullptr);
  const std::size_t before = rig.ctrl.packet_in_count();
  CHECK_FALSE(rig.ctrl.send_from_host({"10.0.0.2", "10.0.0.13", "DATA"}));
  rig.engine.run_until(100.0);
  CHECK(rig.ctrl.packet_in_count() == before);
  CHECK(rig.ctrl.send_from_host({"10.0.0.2", "10.0.0.12", "DATA"}));
}

TEST_CASE("a 1000 MB store over three nodes") {
  Rig rig(mesh());
  rig.boot();
  const StoreOutcome o = rig.store("big.iso", 1000 * kBytesPerMb);
  REQUIRE(o.ok());
  CHECK(o.decision->plan.entries.size() == 3);
  CHECK(o.decision->plan.allocated() == 1000 * kBytesPerMb);
  CHECK(o.write_time_ms() > 0.0);
  CHECK(o.index.entries.size() == 3);
  CHECK(read_index(o.index_text) == o.index);
  Bytes stored = 0;
  for (const auto& s : rig.stores) {
    for (const auto& [name, b] : s->chunks()) stored += b;
  }
  CHECK(stored == 1000 * kBytesPerMb);
  CHECK(rig.ctrl.decision_log().back().find("\"kind\":\"decision\"") != std::string::npos);
}

TEST_CASE("store then pull returns every byte") {
  Rig rig(mesh());
  rig.boot();
  const StoreOutcome o = rig.store("clip.mp4", 123'456'789);
  REQUIRE(o.ok());
  const PullOutcome p = rig.pull(o.index);
  CHECK(p.verdict.ok);
  REQUIRE(p.fetched.size() == o.index.entries.size());
  Bytes sum = 0;
  for (std::size_t i = 0; i < p.fetched.size(); ++i) {
    CHECK(p.fetched[i].chunk_name == o.index.entries[i].chunk_name);
    CHECK(p.fetched[i].bytes == o.index.entries[i].bytes);
    sum += p.fetched[i].bytes;
  }
  CHECK(sum == 123'456'789);
  CHECK(p.completed_at > p.started_at);
}

TEST_CASE("pull aborts before transferring when a chunk is missing") {
  Rig rig(mesh());
  rig.boot();
  const StoreOutcome o = rig.store("a.bin", 30 * kBytesPerMb);
  REQUIRE(o.ok());
  const IndexEntry& victim = o.index.entries.back();
  for (auto& s : rig.stores) s->remove_chunk(victim.chunk_name);
  try {
    rig.ctrl.handle_pull_request("cli", o.index, {});
    FAIL("expected PullAborted");
  } catch (const PullAborted& e) {
    CHECK(e.chunk() == victim.chunk_name);
  }
  CHECK(rig.engine.active_flow_count() == 0);
}

TEST_CASE("every node vetoed: refusal, no transfer") {
  Rig rig(mesh(), 0.01);
  rig.boot();
  const StoreOutcome o = rig.store("x.bin", 10 * kBytesPerMb);
  CHECK_FALSE(o.ok());
  CHECK_FALSE(o.refusal.empty());
  CHECK(rig.ctrl.decision_log().back().find("refusal") != std::string::npos);
  for (const auto& s : rig.stores) CHECK(s->chunks().empty());
}

TEST_CASE("single storage node gets the whole file") {
  Rig rig(mesh(1));
  rig.boot();
  const StoreOutcome o = rig.store("solo.bin", 10 * kBytesPerMb);
  REQUIRE(o.ok());
  REQUIRE(o.decision->plan.entries.size() == 1);
  CHECK(o.decision->plan.entries[0].bytes == 10 * kBytesPerMb);
}

TEST_CASE("stale pool refuses") {
  Rig rig(mesh());
  CHECK_THROWS_AS(rig.ctrl.handle_store_request("cli", "f", 10), RefusedError);
  rig.ctrl.start_monitoring();
  rig.engine.run_until(20000.0);
  // links fresh, but no node has ever reported
  CHECK_THROWS_AS(rig.ctrl.handle_store_request("cli", "f", 10), RefusedError);
  CHECK(rig.ctrl.staleness_limit() == 6000.0);
}

TEST_CASE("node samples older than the limit are excluded") {
  Rig rig(mesh());
  rig.ctrl.start_monitoring();
  rig.engine.run_until(1000.0);
  rig.ctrl.pool().update(NodeLoad{"n1", 100, 200, 0, 0, 0, 0.0});
  rig.ctrl.pool().update(NodeLoad{"n2", 100, 200, 0, 0, 0, 1000.0});
  rig.engine.run_until(6500.0);
  const StoreDecision d = rig.ctrl.handle_store_request("cli", "f", 1000);
  REQUIRE(d.plan.entries.size() == 1);
  CHECK(d.plan.entries[0].node == "n2");
}

TEST_CASE("information pool") {
  InformationPool pool(128);
  CHECK_FALSE(pool.query_links(0.0));
  CHECK(pool.update(LinkSnapshot{100.0, {}}));
  CHECK_FALSE(pool.update(LinkSnapshot{50.0, {}}));
  CHECK_FALSE(pool.update(LinkSnapshot{100.0, {}}));
  CHECK(pool.latest_links()->measured_at == 100.0);
  CHECK(pool.query_links(350.0)->age == 250.0);

  CHECK(pool.update(NodeLoad{"n", 1, 2, 0, 0, 0, 10.0}));
  CHECK_FALSE(pool.update(NodeLoad{"n", 9, 9, 0, 0, 0, 5.0}));
  CHECK(pool.node_loads().at("n").v_remaining_mb == 1.0);
  CHECK(pool.query_nodes(40.0).front().age == 30.0);

  for (int i = 0; i < 200; ++i) pool.update(LinkSnapshot{1000.0 + i, {}});
  CHECK(pool.history().size() == 128);
  CHECK(pool.history().back().measured_at == 1199.0);
  CHECK(pool.history().front().measured_at == 1072.0);
  CHECK_THROWS_AS(InformationPool(0), Error);
}

namespace {

Topology triangle(double direct_delay) {
  return fixtures::make({"s1", "s2", "s3"}, {{"s1", "s2", 100, direct_delay}, {"s1", "s3", 100, 1}, {"s3", "s2", 100, 1}},
                        {{"c", "10.0.0.1", "controller", "s1"}, {"a", "10.0.0.2", "client", "s1"},
                         {"b", "10.0.0.3", "storage", "s2"}});
}

LinkSnapshot measured(const Topology& t) {
  LinkSnapshot s{1.0, {}};
  for (LinkId l = 0; l < t.links.size(); ++l) s.links.push_back({l, 0, t.links[l].capacity_mbps, t.links[l].delay_ms, t.links[l].loss, 1.0});
  return s;
}

}  // namespace

TEST_CASE("routing picks the direct edge, then the detour when it is 10x slower") {
  const Topology fast = triangle(1.0);
  const Route r1 = compute_route(fast, "a", "b", measured(fast));
  CHECK(r1.switches == std::vector<SwitchId>{"s1", "s2"});
  const Topology slow = triangle(10.0);
  const Route r2 = compute_route(slow, "a", "b", measured(slow));
  CHECK(r2.switches == std::vector<SwitchId>{"s1", "s3", "s2"});
  CHECK(r2.path.size() == 2);
  CHECK(r2.cost == doctest::Approx(path_cost(r2.path, edge_costs(measured(slow)))));
}

TEST_CASE("edge cost scales") {
  LinkSnapshot s{0, {{0, 0, 100, 1, 0.0, 0}, {1, 0, 50, 3, 0.5, 0}}};
  const auto c = edge_costs(s, RouteWeights{0.5, 0.25, 0.25});
  CHECK(c[0] == doctest::Approx(0.0));
  CHECK(c[1] == doctest::Approx(0.5 + 0.25 + 0.125));
}

TEST_CASE("same switch and unreachable cases") {
  const Topology t = fixtures::make({"s1", "s2"}, {{"s1", "s2"}},
                                    {{"c", "10.0.0.1", "controller", "s1"}, {"a", "10.0.0.2", "client", "s1"},
                                     {"b", "10.0.0.3", "storage", "s1"}});
  const Route r = compute_route(t, "a", "b", measured(t));
  CHECK(r.path.empty());
  CHECK(r.cost == 0.0);
  CHECK_THROWS_AS(compute_route(t, "a", "a", measured(t)), Error);
}

TEST_CASE("property: Dijkstra matches exhaustive search on small graphs") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int iter = 0; iter < 400; ++iter) {
    const int n = std::uniform_int_distribution<int>(2, 7)(rng);
    std::vector<std::string> sw;
    for (int i = 0; i < n; ++i) sw.push_back("s" + std::to_string(i));
    std::vector<fixtures::LinkSpec> links;
    std::vector<std::pair<int, int>> ends;
    for (int i = 1; i < n; ++i) {
      const int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
      ends.push_back({j, i});
    }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (u(rng) < 0.35 && std::find(ends.begin(), ends.end(), std::make_pair(i, j)) == ends.end()) ends.push_back({i, j});
    for (auto [a, b] : ends) links.push_back({sw[a], sw[b], 10 + 990 * u(rng), 10 * u(rng), 0.1 * u(rng)});
    const int s = std::uniform_int_distribution<int>(0, n - 1)(rng);
    int t = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (t == s) t = (s + 1) % n;
    const Topology topo = fixtures::make(sw, links,
                                         {{"c", "10.0.0.1", "controller", sw[0]}, {"x", "10.0.0.2", "client", sw[s]},
                                          {"y", "10.0.0.3", "storage", sw[t]}});
    LinkSnapshot snap{0, {}};
    for (LinkId l = 0; l < topo.links.size(); ++l)
      snap.links.push_back({l, 0, topo.links[l].capacity_mbps * u(rng), topo.links[l].delay_ms, topo.links[l].loss, 0});
    const auto costs = edge_costs(snap);
    std::vector<oracle::Edge> edges;
    for (std::size_t l = 0; l < ends.size(); ++l) edges.push_back({std::size_t(ends[l].first), std::size_t(ends[l].second), costs[l]});
    const Route r = compute_route(topo, "x", "y", snap);
    CHECK(r.cost == doctest::Approx(oracle::min_simple_path_cost(n, edges, s, t)).epsilon(1e-12));
    CHECK(r.switches.front() == sw[s]);
    CHECK(r.switches.back() == sw[t]);
  }
}

TEST_CASE("installed routes are evicted when their cost shifts") {
  Rig rig(triangle(1.0));
  rig.ctrl.start_monitoring();
  rig.engine.run_until(1000.0);
  REQUIRE(rig.ctrl.handle_packet_in({"10.0.0.2", "10.0.0.3", "DATA"}).kind == DispatchKind::route);
  rig.engine.run_until(2000.0);
  CHECK(rig.ctrl.flow_table().find("10.0.0.2", "10.0.0.3") != nullptr);
  rig.engine.inject_cross_traffic(CrossTraffic{0, "s1", 80.0, rig.engine.now(), 1e9});
  rig.engine.run_until(4000.0);
  CHECK(rig.ctrl.flow_table().find("10.0.0.2", "10.0.0.3") == nullptr);
}
