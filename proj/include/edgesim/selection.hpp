#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "edgesim/common.hpp"
#include "edgesim/measurement.hpp"
#include "edgesim/node_agent.hpp"

namespace edgesim {

/// Columns of the decision matrix: remaining capacity, network score, then the
/// three load percentages negated so that larger is better everywhere.
inline constexpr int kAttributes = 5;
enum Attribute : int { kCapacity = 0, kNetwork = 1, kDiskIo = 2, kCpu = 3, kMemory = 4 };

template <typename Scalar>
using DecisionMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, kAttributes>;
template <typename Scalar>
using AttributeRow = Eigen::Matrix<Scalar, 1, kAttributes>;
template <typename Scalar>
using ScoreVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct WeightVector {
  double v = 0.20;
  double p = 0.25;
  double l = 0.30;
  double c = 0.15;
  double r = 0.10;

  template <typename Scalar = double>
  AttributeRow<Scalar> as_row() const {
    AttributeRow<Scalar> w;
    w << Scalar(v), Scalar(p), Scalar(l), Scalar(c), Scalar(r);
    return w;
  }
  double sum() const { return v + p + l + c + r; }
  /// l >= p >= v >= c >= r
  bool follows_recommended_order() const { return l >= p && p >= v && v >= c && c >= r; }
};

/// Throws Error on negative entries or a sum off 1 by more than 1e-9.
/// Returns warnings (currently only the ordering check).
std::vector<std::string> validate_weights(const WeightVector& w);

template <typename Scalar>
struct DecisionOutcome {
  DecisionMatrix<Scalar> matrix;
  DecisionMatrix<Scalar> normalized;
  DecisionMatrix<Scalar> weighted;
  AttributeRow<Scalar> ideal_pos;
  AttributeRow<Scalar> ideal_neg;
  ScoreVector<Scalar> dist_pos;
  ScoreVector<Scalar> dist_neg;
  ScoreVector<Scalar> closeness;
};

/// Column-wise vector normalisation; an all-zero column stays zero.
template <typename Derived>
DecisionMatrix<typename Derived::Scalar> normalize_columns(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  DecisionMatrix<Scalar> out = m;
  const AttributeRow<Scalar> norms = m.colwise().norm();
  for (int j = 0; j < kAttributes; ++j) {
    if (norms(j) > Scalar(0)) {
      out.col(j) /= norms(j);
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

/// Full TOPSIS pipeline over an n x 5 benefit-oriented matrix.
///
/// Ideals are the column-wise max and min of the weighted matrix. Closeness
/// is D-/(D+ + D-), and 0.5 when both distances vanish (every row identical
/// after weighting).
template <typename Derived>
DecisionOutcome<typename Derived::Scalar> topsis(const Eigen::MatrixBase<Derived>& m,
                                                 const AttributeRow<typename Derived::Scalar>& w) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::ColsAtCompileTime == kAttributes || Derived::ColsAtCompileTime == Eigen::Dynamic);
  if (m.rows() < 1 || m.cols() != kAttributes) throw Error("topsis: expected an n x 5 matrix with n >= 1");
  if (!m.allFinite()) throw Error("topsis: decision matrix has non-finite entries");
  if (!w.allFinite()) throw Error("topsis: weights have non-finite entries");

  DecisionOutcome<Scalar> out;
  out.matrix = m;
  out.normalized = normalize_columns(m);
  out.weighted = out.normalized * w.asDiagonal();
  out.ideal_pos = out.weighted.colwise().maxCoeff();
  out.ideal_neg = out.weighted.colwise().minCoeff();
  out.dist_pos = (out.weighted.rowwise() - out.ideal_pos).rowwise().norm();
  out.dist_neg = (out.weighted.rowwise() - out.ideal_neg).rowwise().norm();

  const ScoreVector<Scalar> total = out.dist_pos + out.dist_neg;
  out.closeness = (total.array() > Scalar(0))
                      .select(out.dist_neg.array() / total.array(), Scalar(0.5))
                      .matrix();
  return out;
}

template <typename Derived>
ScoreVector<typename Derived::Scalar> topsis_closeness(const Eigen::MatrixBase<Derived>& m,
                                                       const AttributeRow<typename Derived::Scalar>& w) {
  return topsis(m, w).closeness;
}

inline ScoreVector<double> topsis_closeness(const DecisionMatrix<double>& m, const WeightVector& w) {
  validate_weights(w);
  return topsis(m, w.as_row<double>()).closeness;
}

// ---------------------------------------------------------------------------
// Candidate pools and plans

struct Candidate {
  HostId node;
  std::string ip;
  NodeLoad load;
  double p = 0.0;  // network score
};

using CandidatePool = std::vector<Candidate>;

/// Row i = [V_i, P_i, -L_i, -C_i, -R_i].
DecisionMatrix<double> build_decision_matrix(std::span<const Candidate> pool);

struct ChunkEntry {
  HostId node;
  std::string ip;
  Bytes bytes = 0;
};

struct ChunkPlan {
  std::string file_name;
  Bytes total_bytes = 0;
  std::vector<ChunkEntry> entries;

  Bytes allocated() const;
  const ChunkEntry* find(const HostId& node) const;
};

struct PlanTarget {
  HostId node;
  std::string ip;
};

/// Every candidate scored zero while more than one was eligible.
class DegenerateClosenessError : public Error {
 public:
  using Error::Error;
};

/// Splits total_bytes proportionally to `weights` with largest-remainder
/// rounding; ties in remainder go to the lower host id. Zero-byte entries are
/// dropped; the rest are ordered by descending weight, then host id.
ChunkPlan allocate_chunks(std::span<const double> weights, std::span<const PlanTarget> targets,
                          Bytes total_bytes, std::string file_name = {});

struct StoreRequest {
  std::string file_name;
  Bytes total_bytes = 0;
};

/// No candidate survived the capacity veto; the request is refused.
class RefusedError : public Error {
 public:
  using Error::Error;
};

/// Nodes with less than this fraction of capacity left never receive data.
inline constexpr double kVetoFraction = 0.05;

bool vetoed(const NodeLoad& load);

struct SelectionResult {
  ChunkPlan plan;
  std::vector<HostId> vetoed;
  std::vector<HostId> ranked;  // eligible nodes in the order TOPSIS ranked them
  std::optional<DecisionOutcome<double>> outcome;  // absent on the single-node shortcut
};

/// Veto, single-node shortcut, TOPSIS, proportional allocation.
/// Throws RefusedError when every node is vetoed.
SelectionResult select_nodes(const StoreRequest& request, std::span<const Candidate> pool,
                             const WeightVector& weights);

}  // namespace edgesim
