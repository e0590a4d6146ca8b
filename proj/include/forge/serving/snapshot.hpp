#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/dke/vocab.hpp"
#include "forge/mlm/model.hpp"
#include "forge/mlm/relevance.hpp"

namespace forge::serving {

using PairKey = std::array<std::uint8_t, 16>;

inline constexpr std::string_view kDigestAlgo = "sha256-128";

/// First 16 bytes of SHA-256 over normalize_text(query) + '\0' + item_id.
PairKey pair_key(std::string_view query, std::string_view item_id);

struct SnapshotHeader {
  int format_version = 1;
  std::string digest_algo{kDigestAlgo};
  std::string model_checkpoint_digest;
  std::size_t entry_count = 0;
  std::string created_at;  // ISO-8601 UTC
  std::string version;     // e.g. snap-20261016
  std::string config_digest;
  std::uint64_t seed = 0;
};

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable scored pairs sorted by key.
class Snapshot {
 public:
  Snapshot() = default;
  Snapshot(SnapshotHeader header, std::vector<std::pair<PairKey, double>> entries);

  const SnapshotHeader& header() const { return header_; }
  const std::vector<std::pair<PairKey, double>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::optional<double> lookup(const PairKey& key) const;
  std::optional<double> lookup(std::string_view query, std::string_view item_id) const {
    return lookup(pair_key(query, item_id));
  }

 private:
  SnapshotHeader header_;
  std::vector<std::pair<PairKey, double>> entries_;
};

struct QueryItemPair {
  std::string query;
  std::string item_id;
};

struct BatchScoreStats {
  std::size_t unresolved = 0;
  std::size_t duplicates = 0;
};

/// One entry per distinct pair key whose item resolves in the catalog.
Snapshot batch_score(const mlm::TrainableMlm& model, const dke::Vocab& vocab,
                     const mlm::RelevancePrompt& prompt, std::span<const QueryItemPair> pairs,
                     const corpus::Catalog& catalog, SnapshotHeader header,
                     BatchScoreStats* stats = nullptr);

/// "snap-YYYYMMDD" from an ISO-8601 timestamp.
std::string version_from_timestamp(std::string_view iso);
std::string utc_now_iso();

/// Magic, length-prefixed JSON header, 24-byte records (key, float64 LE),
/// then a SHA-256 of all preceding bytes.
std::string serialize_snapshot(const Snapshot& snap);
/// Throws SnapshotError on bad magic, checksum, header or ordering.
Snapshot parse_snapshot(std::string_view bytes);
void save_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot load_snapshot(const std::filesystem::path& path);

/// Pairs file: JSONL {"query": str, "item_id": str}, optional header line.
std::vector<QueryItemPair> load_pairs(const std::filesystem::path& path);
std::string serialize_pairs(std::span<const QueryItemPair> pairs);

/// The k most-clicked (query, item) pairs, ties by query then item_id.
std::vector<QueryItemPair> top_clicked_pairs(std::span<const corpus::ClickRecord> clicks,
                                             std::size_t k);

}  // namespace forge::serving
