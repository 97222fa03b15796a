#include "edgesim/selection.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace edgesim {

std::vector<std::string> validate_weights(const WeightVector& w) {
  const AttributeRow<double> row = w.as_row<double>();
  if (!row.allFinite() || (row.array() < 0.0).any()) throw Error("weights must be finite and non-negative");
  if (std::abs(w.sum() - 1.0) > 1e-9) throw Error("weights must sum to 1");
  std::vector<std::string> warnings;
  if (!w.follows_recommended_order()) {
    warnings.emplace_back("weights do not follow the recommended order w_l >= w_p >= w_v >= w_c >= w_r");
  }
  return warnings;
}

DecisionMatrix<double> build_decision_matrix(std::span<const Candidate> pool) {
  if (pool.empty()) throw Error("build_decision_matrix: empty pool");
  DecisionMatrix<double> m(static_cast<Eigen::Index>(pool.size()), kAttributes);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const NodeLoad& load = pool[i].load;
    m.row(static_cast<Eigen::Index>(i)) << load.v_remaining_mb, pool[i].p, -load.l_disk_io, -load.c_cpu,
        -load.r_mem;
  }
  return m;
}

Bytes ChunkPlan::allocated() const {
  return std::accumulate(entries.begin(), entries.end(), Bytes{0},
                         [](Bytes acc, const ChunkEntry& e) { return acc + e.bytes; });
}

const ChunkEntry* ChunkPlan::find(const HostId& node) const {
  auto it = std::find_if(entries.begin(), entries.end(), [&](const ChunkEntry& e) { return e.node == node; });
  return it == entries.end() ? nullptr : &*it;
}

ChunkPlan allocate_chunks(std::span<const double> weights, std::span<const PlanTarget> targets, Bytes total_bytes,
                          std::string file_name) {
  const std::size_t n = targets.size();
  if (n == 0 || weights.size() != n) throw Error("allocate_chunks: weights and targets must be nonempty and aligned");
  if (total_bytes == 0) throw Error("allocate_chunks: total_bytes must be positive");
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error("allocate_chunks: weights must be finite and non-negative");
  }

  std::vector<long double> share(weights.begin(), weights.end());
  long double sum = std::accumulate(share.begin(), share.end(), 0.0L);
  if (sum <= 0.0L) {
    if (n > 1) throw DegenerateClosenessError("allocate_chunks: every candidate has zero closeness");
    share[0] = 1.0L;
    sum = 1.0L;
  }

  std::vector<Bytes> bytes(n);
  std::vector<long long> remainder_key(n);  // fractional part on a 1e-9 grid
  long long assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double exact = static_cast<long double>(total_bytes) * share[i] / sum;
    const long double whole = std::floor(exact);
    bytes[i] = static_cast<Bytes>(whole);
    remainder_key[i] = std::llround((exact - whole) * 1e9L);
    assigned += static_cast<long long>(bytes[i]);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  long long deficit = static_cast<long long>(total_bytes) - assigned;
  if (deficit > 0) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder_key[a] != remainder_key[b]) return remainder_key[a] > remainder_key[b];
      return targets[a].node < targets[b].node;
    });
    for (std::size_t k = 0; deficit > 0; ++k, --deficit) ++bytes[order[k % n]];
  } else if (deficit < 0) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder_key[a] != remainder_key[b]) return remainder_key[a] < remainder_key[b];
      return targets[a].node > targets[b].node;
    });
    for (std::size_t k = 0; deficit < 0; ++k) {
      std::size_t i = order[k % n];
      if (bytes[i] > 0) {
        --bytes[i];
        ++deficit;
      }
    }
  }

  std::vector<std::size_t> plan_order;
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes[i] > 0) plan_order.push_back(i);
  }
  std::sort(plan_order.begin(), plan_order.end(), [&](std::size_t a, std::size_t b) {
    if (share[a] != share[b]) return share[a] > share[b];
    return targets[a].node < targets[b].node;
  });

  ChunkPlan plan;
  plan.file_name = std::move(file_name);
  plan.total_bytes = total_bytes;
  for (std::size_t i : plan_order) plan.entries.push_back({targets[i].node, targets[i].ip, bytes[i]});
  return plan;
}

bool vetoed(const NodeLoad& load) { return load.remaining_fraction() < kVetoFraction; }

SelectionResult select_nodes(const StoreRequest& request, std::span<const Candidate> pool,
                             const WeightVector& weights) {
  if (request.total_bytes == 0) throw Error("select_nodes: file size must be positive");
  validate_weights(weights);

  std::set<HostId> seen;
  SelectionResult result;
  std::vector<Candidate> eligible;
  for (const Candidate& c : pool) {
    if (!seen.insert(c.node).second) throw Error("select_nodes: duplicate candidate '" + c.node + "'");
    if (vetoed(c.load)) {
      result.vetoed.push_back(c.node);
    } else {
      eligible.push_back(c);
    }
  }
  if (eligible.empty()) throw RefusedError("no storage node has at least 5% capacity remaining");

  if (eligible.size() == 1) {
    const Candidate& only = eligible.front();
    result.plan = ChunkPlan{request.file_name, request.total_bytes, {{only.node, only.ip, request.total_bytes}}};
    result.ranked = {only.node};
    return result;
  }

  DecisionOutcome<double> outcome = topsis(build_decision_matrix(eligible), weights.as_row<double>());
  std::vector<double> closeness(outcome.closeness.data(), outcome.closeness.data() + outcome.closeness.size());
  std::vector<PlanTarget> targets;
  for (const Candidate& c : eligible) targets.push_back({c.node, c.ip});

  try {
    result.plan = allocate_chunks(closeness, targets, request.total_bytes, request.file_name);
  } catch (const DegenerateClosenessError&) {
    std::vector<double> equal(targets.size(), 1.0);
    result.plan = allocate_chunks(equal, targets, request.total_bytes, request.file_name);
  }

  std::vector<std::size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (closeness[a] != closeness[b]) return closeness[a] > closeness[b];
    return eligible[a].node < eligible[b].node;
  });
  for (std::size_t i : order) result.ranked.push_back(eligible[i].node);
  result.outcome = std::move(outcome);
  return result;
}

}  // namespace edgesim
