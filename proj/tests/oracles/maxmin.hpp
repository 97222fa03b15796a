#pragma once

#include <cmath>
#include <limits>
#include <vector>

// Checks the defining property of a max-min fair allocation instead of
// recomputing one: every demand is either met, or crosses a saturated
// resource on which no other user gets more.
namespace oracle {

struct User {
  std::vector<std::size_t> resources;
  double demand = std::numeric_limits<double>::infinity();
};

inline bool is_max_min_fair(const std::vector<double>& capacity, const std::vector<User>& users,
                            const std::vector<double>& rate, double tol = 1e-6) {
  std::vector<double> load(capacity.size(), 0.0);
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (rate[u] < -tol || rate[u] > users[u].demand + tol) return false;
    for (std::size_t r : users[u].resources) load[r] += rate[u];
  }
  for (std::size_t r = 0; r < capacity.size(); ++r)
    if (load[r] > capacity[r] + tol) return false;
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (rate[u] >= users[u].demand - tol) continue;
    bool bottlenecked = false;
    for (std::size_t r : users[u].resources) {
      if (load[r] < capacity[r] - tol) continue;
      bool largest = true;
      for (std::size_t v = 0; v < users.size(); ++v) {
        for (std::size_t q : users[v].resources)
          if (q == r && rate[v] > rate[u] + tol) largest = false;
      }
      if (largest) bottlenecked = true;
    }
    if (!bottlenecked) return false;
  }
  return true;
}

}  // namespace oracle
