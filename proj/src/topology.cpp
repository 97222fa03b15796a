#include "edgesim/topology.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace edgesim {

using nlohmann::json;

std::string_view to_string(HostRole role) {
  switch (role) {
    case HostRole::client:
      return "client";
    case HostRole::storage:
      return "storage";
    case HostRole::controller:
      return "controller";
  }
  return "client";
}

std::optional<HostRole> parse_host_role(std::string_view text) {
  if (text == "client") return HostRole::client;
  if (text == "storage") return HostRole::storage;
  if (text == "controller") return HostRole::controller;
  return std::nullopt;
}

const Host* Topology::find_host(std::string_view id) const {
  auto it = std::find_if(hosts.begin(), hosts.end(), [&](const Host& h) { return h.id == id; });
  return it == hosts.end() ? nullptr : &*it;
}

const Host* Topology::find_host_by_ip(std::string_view ip) const {
  auto it = std::find_if(hosts.begin(), hosts.end(), [&](const Host& h) { return h.ip == ip; });
  return it == hosts.end() ? nullptr : &*it;
}

const Host& Topology::host(std::string_view id) const {
  const Host* h = find_host(id);
  if (h == nullptr) throw SemanticError("unknown host '" + std::string(id) + "'");
  return *h;
}

const Host& Topology::controller() const {
  for (const Host& h : hosts) {
    if (h.role == HostRole::controller) return h;
  }
  throw SemanticError("topology has no controller host");
}

std::vector<const Host*> Topology::storage_hosts() const {
  std::vector<const Host*> out;
  for (const Host& h : hosts) {
    if (h.role == HostRole::storage) out.push_back(&h);
  }
  return out;
}

bool Topology::has_switch(std::string_view s) const {
  return std::find(switches.begin(), switches.end(), s) != switches.end();
}

std::optional<LinkId> Topology::find_link(std::string_view a, std::string_view b) const {
  for (LinkId i = 0; i < links.size(); ++i) {
    const Link& l = links[i];
    if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return i;
  }
  return std::nullopt;
}

std::vector<LinkId> Topology::incident_links(std::string_view s) const {
  std::vector<LinkId> out;
  for (LinkId i = 0; i < links.size(); ++i) {
    if (links[i].a == s || links[i].b == s) out.push_back(i);
  }
  return out;
}

ValidationReport validate_topology(const Topology& t) {
  ValidationReport report;
  auto add = [&](std::string msg) { report.push_back(std::move(msg)); };

  std::set<SwitchId> switch_set;
  for (const SwitchId& s : t.switches) {
    if (!switch_set.insert(s).second) add("switch '" + s + "': duplicate switch id");
  }
  if (t.switches.empty()) add("topology has no switches");

  std::set<std::pair<SwitchId, SwitchId>> seen_links;
  for (const Link& l : t.links) {
    const std::string tag = "link " + l.name() + ": ";
    if (!(l.capacity_mbps > 0.0)) add(tag + "capacity must be positive");
    if (!(l.delay_ms >= 0.0)) add(tag + "delay must be non-negative");
    if (!(l.loss >= 0.0 && l.loss <= 1.0)) add(tag + "loss must be within [0,1]");
    if (l.a == l.b) add(tag + "endpoints must be distinct");
    if (!switch_set.count(l.a)) add(tag + "unknown switch '" + l.a + "'");
    if (!switch_set.count(l.b)) add(tag + "unknown switch '" + l.b + "'");
    auto key = std::minmax(l.a, l.b);
    if (!seen_links.insert({key.first, key.second}).second) add(tag + "duplicate undirected link");
  }

  std::set<std::string> ips;
  std::set<HostId> ids;
  int controllers = 0;
  int storage = 0;
  for (const Host& h : t.hosts) {
    const std::string tag = "host '" + h.id + "': ";
    if (!ids.insert(h.id).second) add(tag + "duplicate host id");
    if (!ips.insert(h.ip).second) add(tag + "ip " + h.ip + " is not unique");
    if (!switch_set.count(h.attached_switch)) {
      add(tag + "unknown switch '" + h.attached_switch + "'");
    }
    if (h.role == HostRole::controller) ++controllers;
    if (h.role == HostRole::storage) ++storage;
  }
  if (controllers != 1) {
    add("topology must have exactly one controller host, found " + std::to_string(controllers));
  }
  if (storage < 1) add("topology must have at least one storage host");
  if (!(t.control_channel_delay_ms >= 0.0)) add("control channel delay must be non-negative");
  if (!(t.control_channel_jitter_ms >= 0.0)) add("control channel jitter must be non-negative");
  if (!(t.access_delay_ms >= 0.0)) add("access delay must be non-negative");

  // Breadth-first reachability over known switches.
  if (!t.switches.empty()) {
    std::map<SwitchId, std::vector<SwitchId>> adj;
    for (const Link& l : t.links) {
      if (switch_set.count(l.a) && switch_set.count(l.b)) {
        adj[l.a].push_back(l.b);
        adj[l.b].push_back(l.a);
      }
    }
    std::set<SwitchId> visited{t.switches.front()};
    std::queue<SwitchId> frontier;
    frontier.push(t.switches.front());
    while (!frontier.empty()) {
      SwitchId s = frontier.front();
      frontier.pop();
      for (const SwitchId& n : adj[s]) {
        if (visited.insert(n).second) frontier.push(n);
      }
    }
    if (visited.size() != switch_set.size()) {
      add("topology is disconnected: " + std::to_string(switch_set.size() - visited.size()) +
          " switch(es) unreachable from '" + t.switches.front() + "'");
    }
  }
  return report;
}

namespace {

std::string join_report(const ValidationReport& report) {
  std::string out = "invalid topology:";
  for (const std::string& line : report) out += "\n  " + line;
  return out;
}

SwitchId id_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw ParseError("switch ids must be strings or integers");
}

}  // namespace

TopologyError::TopologyError(ValidationReport report)
    : SemanticError(join_report(report)), report_(std::move(report)) {}

Topology load_topology(std::string_view config_text) {
  json doc;
  try {
    doc = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("topology: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("topology: document must be a JSON object");

  Topology t;
  try {
    for (const json& s : doc.at("switches")) t.switches.push_back(id_from_json(s));
    for (const json& h : doc.at("hosts")) {
      Host host;
      host.id = id_from_json(h.at("id"));
      host.ip = h.at("ip").get<std::string>();
      auto role = parse_host_role(h.at("role").get<std::string>());
      if (!role) throw ParseError("topology: unknown host role '" + h.at("role").dump() + "'");
      host.role = *role;
      host.attached_switch = id_from_json(h.at("switch"));
      t.hosts.push_back(std::move(host));
    }
    for (const json& l : doc.value("links", json::array())) {
      Link link;
      link.a = id_from_json(l.at("a"));
      link.b = id_from_json(l.at("b"));
      link.capacity_mbps = l.at("capacity_mbps").get<double>();
      link.delay_ms = l.value("delay_ms", 0.0);
      link.loss = l.value("loss", 0.0);
      t.links.push_back(std::move(link));
    }
    if (doc.contains("control_channel")) {
      const json& cc = doc.at("control_channel");
      t.control_channel_delay_ms = cc.value("delay_ms", 0.0);
      t.control_channel_jitter_ms = cc.value("jitter_ms", 0.0);
    }
    t.access_delay_ms = doc.value("access_delay_ms", 1.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("topology: ") + e.what());
  }

  ValidationReport report = validate_topology(t);
  if (!report.empty()) throw TopologyError(std::move(report));
  return t;
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open topology file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_topology(buf.str());
}

std::string serialize_topology(const Topology& t) {
  json doc;
  doc["switches"] = t.switches;
  doc["hosts"] = json::array();
  for (const Host& h : t.hosts) {
    doc["hosts"].push_back(
        {{"id", h.id}, {"ip", h.ip}, {"role", std::string(to_string(h.role))}, {"switch", h.attached_switch}});
  }
  doc["links"] = json::array();
  for (const Link& l : t.links) {
    doc["links"].push_back(
        {{"a", l.a}, {"b", l.b}, {"capacity_mbps", l.capacity_mbps}, {"delay_ms", l.delay_ms}, {"loss", l.loss}});
  }
  doc["control_channel"] = {{"delay_ms", t.control_channel_delay_ms},
                            {"jitter_ms", t.control_channel_jitter_ms}};
  doc["access_delay_ms"] = t.access_delay_ms;
  return doc.dump(2);
}

}  // namespace edgesim
