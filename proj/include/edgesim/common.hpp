#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace edgesim {

using SwitchId = std::string;
using HostId = std::string;
using LinkId = std::size_t;
using Bytes = std::uint64_t;

/// Simulated time in milliseconds since the start of a run.
using TimeMs = double;

inline constexpr Bytes kBytesPerMb = 1024 * 1024;

/// Megabits per second to bytes per millisecond.
constexpr double mbps_to_bytes_per_ms(double mbps) { return mbps * 1000.0 / 8.0; }
constexpr double bytes_per_ms_to_mbps(double bpms) { return bpms * 8.0 / 1000.0; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed structured input (JSON, payloads, index files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a semantic rule.
class SemanticError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgesim
