#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "edgesim/harness.hpp"
#include "edgesim/measurement.hpp"
#include "edgesim/selection.hpp"
#include "edgesim/topology.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using namespace edgesim;

constexpr int kOk = 0;
constexpr int kScenarioError = 1;
constexpr int kAllVetoed = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Inline JSON or a file path.
std::string json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && arg[first] == '{') return arg;
  return slurp(arg);
}

double field(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<double>();
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  Scenario s = load_scenario_file(scenario_path);
  if (seed) s.seed = *seed;
  for (const std::string& w : validate_weights(s.weights)) std::cerr << "warning: " << w << "\n";
  const Topology topology = load_topology_file(s.topology_path);
  const auto runs = run_scenario(s, topology);
  std::size_t refusals = 0;
  for (const ModeRun& r : runs) {
    for (const std::string& w : r.warnings) std::cerr << "warning: " << to_string(r.mode) << " " << w << "\n";
    for (const MetricsRow& row : r.rows) refusals += row.refusals;
  }
  const std::string dir = write_outputs(s, runs, out.value_or(s.output_dir));
  std::cout << "wrote " << dir << " (" << collect_rows(runs).size() << " rows, " << refusals << " refusals)\n";
  return kOk;
}

int cmd_select(const std::string& pool_arg, const std::optional<std::string>& weights_arg, bool baseline) {
  json pool;
  try {
    pool = json::parse(json_arg(pool_arg));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("pool: ") + e.what());
  }
  const WeightVector weights = weights_arg ? load_weights(json_arg(*weights_arg)) : WeightVector{};
  for (const std::string& w : validate_weights(weights)) std::cerr << "warning: " << w << "\n";

  StoreRequest request;
  CandidatePool candidates;
  std::vector<std::pair<HostId, PathMetrics>> paths;
  try {
    request.file_name = pool.value("file", std::string("file.dat"));
    request.total_bytes = pool.contains("bytes") ? pool.at("bytes").get<Bytes>()
                                                 : static_cast<Bytes>(field(pool, "size_mb", 100.0) * kBytesPerMb);
    for (const json& c : pool.at("candidates")) {
      Candidate cand;
      cand.node = c.at("node").is_string() ? c.at("node").get<std::string>() : std::to_string(c.at("node").get<long long>());
      cand.ip = c.value("ip", std::string());
      cand.load.node = cand.node;
      cand.load.v_remaining_mb = c.at("v_remaining_mb").get<double>();
      cand.load.v_total_mb = c.at("v_total_mb").get<double>();
      cand.load.l_disk_io = field(c, "l", 0.0);
      cand.load.c_cpu = field(c, "c", 0.0);
      cand.load.r_mem = field(c, "r", 0.0);
      if (c.contains("p")) {
        cand.p = c.at("p").get<double>();
      } else if (c.contains("path")) {
        const json& p = c.at("path");
        paths.emplace_back(cand.node, PathMetrics{p.at("bw_mbps").get<double>(), p.at("delay_ms").get<double>(),
                                                  field(p, "loss", 0.0)});
      }
      candidates.push_back(cand);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("pool: ") + e.what());
  }
  if (!paths.empty()) {
    if (paths.size() != candidates.size()) throw ParseError("pool: give either 'p' or 'path' for every candidate");
    const auto scores = network_scores(paths);
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].p = scores[i].p;
  }

  ordered_json out;
  try {
    if (baseline) {
      const ChunkPlan plan = baseline_select(request, candidates);
      out["policy"] = "TEDS";
      out["plan"] = ordered_json::array();
      for (const ChunkEntry& e : plan.entries) out["plan"].push_back({{"node", e.node}, {"ip", e.ip}, {"bytes", e.bytes}});
    } else {
      const SelectionResult r = select_nodes(request, candidates, weights);
      out["policy"] = "EDWS";
      out["vetoed"] = r.vetoed;
      out["ranked"] = ordered_json::array();
      for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        ordered_json item{{"node", r.ranked[i]}};
        if (r.outcome) {
          // ranked is ordered by closeness; find the matching row of the eligible set
          std::size_t row = 0;
          for (const Candidate& c : candidates) {
            if (vetoed(c.load)) continue;
            if (c.node == r.ranked[i]) item["closeness"] = r.outcome->closeness(static_cast<Eigen::Index>(row));
            ++row;
          }
        } else {
          item["closeness"] = 1.0;
        }
        out["ranked"].push_back(item);
      }
      out["plan"] = ordered_json::array();
      for (const ChunkEntry& e : r.plan.entries) out["plan"].push_back({{"node", e.node}, {"ip", e.ip}, {"bytes", e.bytes}});
    }
  } catch (const RefusedError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kAllVetoed;
  }
  out["file"] = request.file_name;
  out["bytes"] = request.total_bytes;
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_validate(const std::string& path) {
  const Topology t = load_topology_file(path);
  std::cout << "ok: " << t.switches.size() << " switches, " << t.links.size() << " links, " << t.hosts.size()
            << " hosts\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgesim: SDN edge storage simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  auto* run = app.add_subcommand("run", "Run a scenario and write metrics, traces and indexes");
  run->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Output directory");

  std::string pool_arg;
  std::optional<std::string> weights_arg;
  bool baseline = false;
  auto* select = app.add_subcommand("select", "Rank a candidate pool and print the chunk plan");
  select->add_option("--pool", pool_arg, "Pool JSON (file or inline)")->required();
  select->add_option("--weights", weights_arg, "Weight JSON (file or inline)");
  select->add_flag("--baseline", baseline, "Capacity-proportional placement instead");

  std::string topology_path;
  auto* validate = app.add_subcommand("validate", "Check a topology file");
  validate->add_option("--topology", topology_path, "Topology JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kScenarioError;
  }

  try {
    if (*run) return cmd_run(scenario_path, seed, out_dir);
    if (*select) return cmd_select(pool_arg, weights_arg, baseline);
    if (*validate) return cmd_validate(topology_path);
  } catch (const TopologyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kScenarioError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kScenarioError;
  }
  return kScenarioError;
}
