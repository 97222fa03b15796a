#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgesim/common.hpp"

namespace edgesim {

/// Undirected inter-switch link with symmetric parameters.
struct Link {
  SwitchId a;
  SwitchId b;
  double capacity_mbps = 0.0;
  double delay_ms = 0.0;
  double loss = 0.0;

  bool touches(const SwitchId& s) const { return a == s || b == s; }
  const SwitchId& other(const SwitchId& s) const { return s == a ? b : a; }
  std::string name() const { return a + "-" + b; }
};

enum class HostRole { client, storage, controller };

std::string_view to_string(HostRole role);
std::optional<HostRole> parse_host_role(std::string_view text);

struct Host {
  HostId id;
  std::string ip;
  HostRole role = HostRole::client;
  SwitchId attached_switch;
};

struct Topology {
  std::vector<SwitchId> switches;
  std::vector<Host> hosts;
  std::vector<Link> links;
  double control_channel_delay_ms = 0.0;
  double control_channel_jitter_ms = 0.0;
  // Host-to-switch access edge: infinite capacity, lossless.
  double access_delay_ms = 1.0;

  const Host* find_host(std::string_view id) const;
  const Host* find_host_by_ip(std::string_view ip) const;
  const Host& host(std::string_view id) const;  // throws SemanticError
  const Host& controller() const;
  std::vector<const Host*> storage_hosts() const;

  bool has_switch(std::string_view s) const;
  std::optional<LinkId> find_link(std::string_view a, std::string_view b) const;
  /// Links incident to `s`, in link-id order.
  std::vector<LinkId> incident_links(std::string_view s) const;
};

/// Every violated invariant, one human-readable line each. Empty means valid.
using ValidationReport = std::vector<std::string>;

ValidationReport validate_topology(const Topology& t);

/// Thrown by load_topology when the document parses but the topology is invalid.
class TopologyError : public SemanticError {
 public:
  explicit TopologyError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Parses the JSON topology document. Throws ParseError or TopologyError.
Topology load_topology(std::string_view config_text);
Topology load_topology_file(const std::string& path);
std::string serialize_topology(const Topology& t);

}  // namespace edgesim
