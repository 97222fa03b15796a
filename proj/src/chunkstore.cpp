#include "edgesim/chunkstore.hpp"

#include <charconv>
#include <cmath>
#include <set>

namespace edgesim {

std::vector<std::string> chunk_names(std::string_view file_name, std::size_t k) {
  if (file_name.empty()) throw Error("chunk_names: empty file name");
  if (k == 0) throw Error("chunk_names: need at least one chunk");
  const std::size_t dot = file_name.rfind('.');
  const bool has_ext = dot != std::string_view::npos && dot > 0;
  const std::string_view stem = has_ext ? file_name.substr(0, dot) : file_name;
  const std::string_view ext = has_ext ? file_name.substr(dot) : std::string_view{};

  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    out.push_back(std::string(stem) + "_" + std::to_string(i) + std::string(ext));
  }
  return out;
}

IndexRecord to_index_record(const ChunkPlan& plan) {
  IndexRecord rec;
  rec.file_name = plan.file_name;
  rec.total_bytes = plan.total_bytes;
  const auto names = chunk_names(plan.file_name, plan.entries.size());
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    rec.entries.push_back({names[i], plan.entries[i].bytes, plan.entries[i].ip});
  }
  return rec;
}

std::string write_index(const IndexRecord& record) {
  std::string out = "file=" + record.file_name + "\n";
  out += "size=" + std::to_string(record.total_bytes) + "\n";
  for (const IndexEntry& e : record.entries) {
    out += "chunk=" + e.chunk_name + "," + std::to_string(e.bytes) + "," + e.node_ip + "\n";
  }
  return out;
}

namespace {

Bytes parse_bytes(std::string_view text, std::size_t line_no) {
  Bytes v = 0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
    throw MalformedIndex("index line " + std::to_string(line_no) + ": invalid byte count '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

IndexRecord read_index(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    lines.push_back(text.substr(0, nl));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }

  IndexRecord rec;
  if (lines.empty() || !lines[0].starts_with("file=") || lines[0].size() == 5) {
    throw MalformedIndex("index line 1: expected 'file=<name>'");
  }
  rec.file_name = std::string(lines[0].substr(5));
  if (lines.size() < 2 || !lines[1].starts_with("size=")) throw MalformedIndex("index line 2: expected 'size=<bytes>'");
  rec.total_bytes = parse_bytes(lines[1].substr(5), 2);

  Bytes sum = 0;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (!line.starts_with("chunk=")) {
      throw MalformedIndex("index line " + std::to_string(i + 1) + ": expected 'chunk=<name>,<bytes>,<ip>'");
    }
    line.remove_prefix(6);
    const std::size_t c2 = line.rfind(',');
    const std::size_t c1 = c2 == std::string_view::npos || c2 == 0 ? std::string_view::npos : line.rfind(',', c2 - 1);
    if (c1 == std::string_view::npos || c1 == 0 || c2 + 1 >= line.size()) {
      throw MalformedIndex("index line " + std::to_string(i + 1) + ": expected 'chunk=<name>,<bytes>,<ip>'");
    }
    IndexEntry e{std::string(line.substr(0, c1)), parse_bytes(line.substr(c1 + 1, c2 - c1 - 1), i + 1),
                 std::string(line.substr(c2 + 1))};
    sum += e.bytes;
    rec.entries.push_back(std::move(e));
  }
  if (rec.entries.empty()) throw MalformedIndex("index has no chunk lines");

  const auto expected = chunk_names(rec.file_name, rec.entries.size());
  for (std::size_t i = 0; i < rec.entries.size(); ++i) {
    if (rec.entries[i].chunk_name != expected[i]) {
      throw MalformedIndex("index chunk " + std::to_string(i + 1) + ": expected name '" + expected[i] + "', found '" +
                           rec.entries[i].chunk_name + "'");
    }
  }
  if (sum != rec.total_bytes) {
    throw IndexSizeMismatch("index chunk sizes sum to " + std::to_string(sum) + " but size line reads " +
                            std::to_string(rec.total_bytes));
  }
  return rec;
}

NodeStore::NodeStore(HostId node, double v_total_mb, double v_remaining_mb) : node_(std::move(node)) {
  if (v_total_mb < 0.0 || v_remaining_mb < 0.0 || v_remaining_mb > v_total_mb) {
    throw SemanticError("node '" + node_ + "': need 0 <= v_remaining <= v_total");
  }
  v_total_ = static_cast<Bytes>(std::llround(v_total_mb * kBytesPerMb));
  const Bytes remaining = static_cast<Bytes>(std::llround(v_remaining_mb * kBytesPerMb));
  preexisting_ = v_total_ - std::min(remaining, v_total_);
}

void NodeStore::store_chunk(const std::string& chunk_name, Bytes bytes) {
  if (chunks_.count(chunk_name)) throw Error("node '" + node_ + "': chunk '" + chunk_name + "' already stored");
  if (bytes > v_remaining_bytes()) {
    throw InsufficientCapacity("node '" + node_ + "': " + std::to_string(bytes) + " bytes do not fit in " +
                               std::to_string(v_remaining_bytes()) + " remaining");
  }
  chunks_.emplace(chunk_name, bytes);
  stored_ += bytes;
}

Bytes NodeStore::fetch_chunk(const std::string& chunk_name) const {
  auto it = chunks_.find(chunk_name);
  if (it == chunks_.end()) throw UnknownChunk("node '" + node_ + "': unknown chunk '" + chunk_name + "'");
  return it->second;
}

bool NodeStore::remove_chunk(const std::string& chunk_name) {
  auto it = chunks_.find(chunk_name);
  if (it == chunks_.end()) return false;
  stored_ -= it->second;
  chunks_.erase(it);
  return true;
}

MergeVerdict verify_merge(const IndexRecord& record, std::span<const FetchedChunk> fetched) {
  if (fetched.size() != record.entries.size()) {
    return {false, "count violation: expected " + std::to_string(record.entries.size()) + " chunks, fetched " +
                       std::to_string(fetched.size())};
  }
  const auto expected = chunk_names(record.file_name, record.entries.size());
  Bytes sum = 0;
  for (std::size_t i = 0; i < fetched.size(); ++i) {
    if (fetched[i].chunk_name != expected[i] || fetched[i].chunk_name != record.entries[i].chunk_name) {
      return {false, "order violation: position " + std::to_string(i + 1) + " holds '" + fetched[i].chunk_name +
                         "', expected '" + expected[i] + "'"};
    }
    if (fetched[i].bytes != record.entries[i].bytes) {
      return {false, "size violation: '" + fetched[i].chunk_name + "' has " + std::to_string(fetched[i].bytes) +
                         " bytes, expected " + std::to_string(record.entries[i].bytes)};
    }
    sum += fetched[i].bytes;
  }
  if (sum != record.total_bytes) {
    return {false, "size violation: merged " + std::to_string(sum) + " bytes, expected " +
                       std::to_string(record.total_bytes)};
  }
  return {true, {}};
}

}  // namespace edgesim
