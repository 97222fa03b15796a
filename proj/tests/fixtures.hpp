#pragma once

#include <string>
#include <vector>

#include "edgesim/topology.hpp"
#include "json.hpp"

namespace fixtures {

struct LinkSpec {
  std::string a;
  std::string b;
  double capacity = 100.0;
  double delay = 0.0;
  double loss = 0.0;
};

struct HostSpec {
  std::string id;
  std::string ip;
  std::string role;
  std::string sw;
};

inline std::string topology_json(const std::vector<std::string>& switches, const std::vector<LinkSpec>& links,
                                 const std::vector<HostSpec>& hosts, double cc_delay = 0.0, double cc_jitter = 0.0) {
  nlohmann::json j;
  j["switches"] = switches;
  j["hosts"] = nlohmann::json::array();
  for (const auto& h : hosts) j["hosts"].push_back({{"id", h.id}, {"ip", h.ip}, {"role", h.role}, {"switch", h.sw}});
  j["links"] = nlohmann::json::array();
  for (const auto& l : links)
    j["links"].push_back({{"a", l.a}, {"b", l.b}, {"capacity_mbps", l.capacity}, {"delay_ms", l.delay}, {"loss", l.loss}});
  j["control_channel"] = {{"delay_ms", cc_delay}, {"jitter_ms", cc_jitter}};
  return j.dump();
}

inline edgesim::Topology make(const std::vector<std::string>& switches, const std::vector<LinkSpec>& links,
                              const std::vector<HostSpec>& hosts, double cc_delay = 0.0, double cc_jitter = 0.0) {
  return edgesim::load_topology(topology_json(switches, links, hosts, cc_delay, cc_jitter));
}

// Two switches, one link, controller + client on s1, storage on s2.
inline edgesim::Topology pair(double capacity = 100.0, double delay = 0.0, double loss = 0.0, double cc_delay = 0.0,
                              double cc_jitter = 0.0) {
  return make({"s1", "s2"}, {{"s1", "s2", capacity, delay, loss}},
              {{"ctl", "10.0.0.1", "controller", "s1"},
               {"cli", "10.0.0.2", "client", "s1"},
               {"st", "10.0.0.3", "storage", "s2"}},
              cc_delay, cc_jitter);
}

inline std::string config_path(const std::string& name) { return std::string(EDGESIM_CONFIG_DIR) + "/" + name; }

}  // namespace fixtures
