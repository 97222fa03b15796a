#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgesim/common.hpp"
#include "edgesim/selection.hpp"

namespace edgesim {

/// `_i` goes before the final extension dot; extensionless names get it appended.
/// ("video.mp4", 2) -> {video_1.mp4, video_2.mp4}
std::vector<std::string> chunk_names(std::string_view file_name, std::size_t k);

struct IndexEntry {
  std::string chunk_name;
  Bytes bytes = 0;
  std::string node_ip;

  bool operator==(const IndexEntry&) const = default;
};

struct IndexRecord {
  std::string file_name;
  Bytes total_bytes = 0;
  std::vector<IndexEntry> entries;

  bool operator==(const IndexRecord&) const = default;
};

class MalformedIndex : public ParseError {
 public:
  using ParseError::ParseError;
};

/// The size line disagrees with the sum of chunk sizes.
class IndexSizeMismatch : public MalformedIndex {
 public:
  using MalformedIndex::MalformedIndex;
};

IndexRecord to_index_record(const ChunkPlan& plan);

/// Line-oriented index document:
///   file=<name>
///   size=<total_bytes>
///   chunk=<chunk_name>,<bytes>,<node_ip>    (one per entry, plan order)
std::string write_index(const IndexRecord& record);
inline std::string write_index(const ChunkPlan& plan) { return write_index(to_index_record(plan)); }

IndexRecord read_index(std::string_view text);

class InsufficientCapacity : public Error {
 public:
  using Error::Error;
};

class UnknownChunk : public Error {
 public:
  using Error::Error;
};

/// Simulated disk of one storage node. Sizes only; contents are never materialised.
class NodeStore {
 public:
  NodeStore(HostId node, double v_total_mb, double v_remaining_mb);

  const HostId& node() const { return node_; }

  /// Throws InsufficientCapacity (state unchanged) when the chunk does not fit.
  void store_chunk(const std::string& chunk_name, Bytes bytes);
  /// Throws UnknownChunk.
  Bytes fetch_chunk(const std::string& chunk_name) const;
  bool has_chunk(const std::string& chunk_name) const { return chunks_.count(chunk_name) != 0; }
  /// Frees a stored chunk; returns false if it was absent.
  bool remove_chunk(const std::string& chunk_name);

  Bytes v_total_bytes() const { return v_total_; }
  Bytes used_bytes() const { return preexisting_ + stored_; }
  Bytes v_remaining_bytes() const { return v_total_ - used_bytes(); }
  double v_remaining_mb() const { return static_cast<double>(v_remaining_bytes()) / kBytesPerMb; }
  double v_total_mb() const { return static_cast<double>(v_total_) / kBytesPerMb; }
  const std::map<std::string, Bytes>& chunks() const { return chunks_; }

 private:
  HostId node_;
  Bytes v_total_ = 0;
  Bytes preexisting_ = 0;
  Bytes stored_ = 0;
  std::map<std::string, Bytes> chunks_;
};

struct FetchedChunk {
  std::string chunk_name;
  Bytes bytes = 0;
};

struct MergeVerdict {
  bool ok = false;
  std::string reason;
};

/// OK iff the chunks arrive in suffix order with their recorded sizes and sum to the file size.
MergeVerdict verify_merge(const IndexRecord& record, std::span<const FetchedChunk> fetched);

}  // namespace edgesim
