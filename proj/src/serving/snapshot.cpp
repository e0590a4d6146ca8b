#include "forge/serving/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>

#include "forge/util/digest.hpp"
#include "forge/util/io.hpp"

namespace forge::serving {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes little-endian");

namespace {
constexpr std::string_view kMagic = "FORGESN1";
constexpr std::size_t kRecordSize = 16 + sizeof(double);
}  // namespace

PairKey pair_key(std::string_view query, std::string_view item_id) {
  std::string buf = corpus::normalize_text(query);
  buf.push_back('\0');
  buf.append(item_id);
  const Sha256 h = sha256(buf);
  PairKey key;
  std::copy_n(h.begin(), key.size(), key.begin());
  return key;
}

Snapshot::Snapshot(SnapshotHeader header, std::vector<std::pair<PairKey, double>> entries)
    : header_(std::move(header)), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].first == entries_[i - 1].first) {
      throw SnapshotError("snapshot contains a duplicate pair key");
    }
  }
  header_.entry_count = entries_.size();
}

std::optional<double> Snapshot::lookup(const PairKey& key) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                             [](const auto& e, const PairKey& k) { return e.first < k; });
  if (it == entries_.end() || it->first != key) return std::nullopt;
  return it->second;
}

Snapshot batch_score(const mlm::TrainableMlm& model, const dke::Vocab& vocab,
                     const mlm::RelevancePrompt& prompt, std::span<const QueryItemPair> pairs,
                     const corpus::Catalog& catalog, SnapshotHeader header,
                     BatchScoreStats* stats) {
  const auto verbalizers = mlm::verbalizer_ids(prompt, vocab);
  std::map<PairKey, double> scored;
  for (const auto& p : pairs) {
    const PairKey key = pair_key(p.query, p.item_id);
    if (scored.count(key)) {
      if (stats) ++stats->duplicates;
      continue;
    }
    auto it = catalog.find(p.item_id);
    if (it == catalog.end()) {
      if (stats) ++stats->unresolved;
      continue;
    }
    const auto ex = mlm::pet_render(prompt, vocab, corpus::normalize_text(p.query), it->second);
    scored.emplace(key, mlm::relevance_from_example(model, ex, verbalizers).score);
  }
  return Snapshot(std::move(header), {scored.begin(), scored.end()});
}

std::string version_from_timestamp(std::string_view iso) {
  std::string digits;
  for (char c : iso.substr(0, std::min<std::size_t>(10, iso.size()))) {
    if (c >= '0' && c <= '9') digits.push_back(c);
  }
  if (digits.size() != 8) throw std::invalid_argument("timestamp must start with YYYY-MM-DD");
  return "snap-" + digits;
}

std::string utc_now_iso() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string serialize_snapshot(const Snapshot& snap) {
  const auto& h = snap.header();
  nlohmann::ordered_json j;
  j["format_version"] = h.format_version;
  j["digest_algo"] = h.digest_algo;
  j["model_checkpoint_digest"] = h.model_checkpoint_digest;
  j["entry_count"] = snap.size();
  j["created_at"] = h.created_at;
  j["version"] = h.version;
  j["config_digest"] = h.config_digest;
  j["seed"] = h.seed;
  const std::string header = j.dump();

  std::string out(kMagic);
  const std::uint64_t len = header.size();
  out.append(reinterpret_cast<const char*>(&len), 8);
  out += header;
  for (const auto& [key, score] : snap.entries()) {
    out.append(reinterpret_cast<const char*>(key.data()), key.size());
    out.append(reinterpret_cast<const char*>(&score), sizeof score);
  }
  const Sha256 sum = sha256(out);
  out.append(reinterpret_cast<const char*>(sum.data()), sum.size());
  return out;
}

Snapshot parse_snapshot(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 + 32 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw SnapshotError("not a snapshot file");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 32);
  const Sha256 sum = sha256(body);
  if (std::memcmp(sum.data(), bytes.data() + body.size(), 32) != 0) {
    throw SnapshotError("snapshot checksum mismatch");
  }
  std::uint64_t len;
  std::memcpy(&len, body.data() + kMagic.size(), 8);
  const std::size_t header_at = kMagic.size() + 8;
  if (len > body.size() - header_at) throw SnapshotError("snapshot header truncated");
  SnapshotHeader h;
  try {
    auto j = nlohmann::json::parse(body.substr(header_at, len));
    h.format_version = j.at("format_version").get<int>();
    h.digest_algo = j.at("digest_algo").get<std::string>();
    h.model_checkpoint_digest = j.at("model_checkpoint_digest").get<std::string>();
    h.entry_count = j.at("entry_count").get<std::size_t>();
    h.created_at = j.at("created_at").get<std::string>();
    h.version = j.at("version").get<std::string>();
    h.config_digest = j.value("config_digest", std::string());
    h.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw SnapshotError(std::string("snapshot header: ") + e.what());
  }
  if (h.format_version != 1) throw SnapshotError("unsupported snapshot format version");
  if (h.digest_algo != kDigestAlgo) throw SnapshotError("unsupported digest algorithm " + h.digest_algo);
  const std::string_view records = body.substr(header_at + len);
  if (records.size() != h.entry_count * kRecordSize) {
    throw SnapshotError("snapshot entry count does not match its records");
  }
  std::vector<std::pair<PairKey, double>> entries(h.entry_count);
  for (std::size_t i = 0; i < h.entry_count; ++i) {
    const char* p = records.data() + i * kRecordSize;
    std::memcpy(entries[i].first.data(), p, 16);
    std::memcpy(&entries[i].second, p + 16, sizeof(double));
    if (i > 0 && !(entries[i - 1].first < entries[i].first)) {
      throw SnapshotError("snapshot records are not strictly sorted");
    }
    if (!(entries[i].second >= 0.0 && entries[i].second <= 1.0)) {
      throw SnapshotError("snapshot score outside [0, 1]");
    }
  }
  return Snapshot(std::move(h), std::move(entries));
}

void save_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  write_file_atomic(path, serialize_snapshot(snap));
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  require_file(path, "snapshot");
  return parse_snapshot(read_file(path));
}

std::vector<QueryItemPair> load_pairs(const std::filesystem::path& path) {
  require_file(path, "pairs file");
  std::ifstream in(path, std::ios::binary);
  std::vector<QueryItemPair> out;
  for_each_record_line(in, [&](std::size_t line, std::string_view text) {
    try {
      auto j = nlohmann::json::parse(text);
      out.push_back({j.at("query").get<std::string>(), j.at("item_id").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::string serialize_pairs(std::span<const QueryItemPair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["query"] = p.query;
    j["item_id"] = p.item_id;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<QueryItemPair> top_clicked_pairs(std::span<const corpus::ClickRecord> clicks,
                                             std::size_t k) {
  std::map<std::pair<std::string, std::string>, std::int64_t> totals;
  for (const auto& c : clicks) totals[{c.query, c.item_id}] += c.clicks;
  std::vector<std::pair<std::pair<std::string, std::string>, std::int64_t>> sorted(totals.begin(),
                                                                                   totals.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<QueryItemPair> out;
  for (const auto& [pair, n] : sorted) {
    if (out.size() >= k || n <= 0) break;
    out.push_back({pair.first, pair.second});
  }
  return out;
}

}  // namespace forge::serving
