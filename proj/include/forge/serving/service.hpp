#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/mlm/checkpoint.hpp"
#include "forge/serving/snapshot.hpp"

namespace forge::serving {

enum class Tier { cache, online };
std::string_view to_string(Tier t);

struct ScoredResult {
  double score = 0.0;
  bool relevant = false;
  Tier tier = Tier::online;
  std::optional<std::string> snapshot_version;  // set iff tier == cache
  std::string error;                            // non-empty on online failure; score unset
};

/// Live model used on cache misses. Throws on failure.
class OnlineScorer {
 public:
  virtual ~OnlineScorer() = default;
  virtual double score(std::string_view query, std::string_view item_id) const = 0;
};

class ModelScorer final : public OnlineScorer {
 public:
  ModelScorer(mlm::Checkpoint ckpt, corpus::Catalog catalog, mlm::RelevancePrompt prompt = {});
  double score(std::string_view query, std::string_view item_id) const override;

 private:
  mlm::Checkpoint ckpt_;
  corpus::Catalog catalog_;
  mlm::RelevancePrompt prompt_;
  mlm::Verbalizers verbalizers_;
};

struct SwapResult {
  bool ok = false;
  std::string version;
  std::string error;
};

struct ServiceMetrics {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t errors = 0;
  std::optional<double> hit_rate;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

/// Cache-first relevance scoring. Readers take a reference to the current
/// snapshot for the duration of a lookup, so a swap never affects a lookup
/// already in flight and the old snapshot lives until its last reader ends.
class RelevanceService {
 public:
  RelevanceService(std::shared_ptr<const Snapshot> snapshot,
                   std::shared_ptr<const OnlineScorer> online);

  ScoredResult score_with_fallback(std::string_view query, std::string_view item_id);

  std::shared_ptr<const Snapshot> snapshot() const;
  SwapResult swap_snapshot(std::shared_ptr<const Snapshot> next);
  /// Loads and validates the file first; on any error the live snapshot stays.
  SwapResult swap_snapshot(const std::filesystem::path& path);

  /// hits / (hits + misses); throws std::logic_error before the first lookup.
  double hit_rate() const;
  void reset_counters();
  ServiceMetrics metrics() const;

 private:
  void record_latency(double ms);

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::shared_ptr<const OnlineScorer> online_;
  std::mutex swap_mu_;
  std::atomic<std::uint64_t> hits_{0}, misses_{0}, errors_{0};
  mutable std::mutex latency_mu_;
  std::vector<double> latencies_;
  std::size_t latency_next_ = 0;
};

/// HTTP front end: POST /score, GET /healthz, GET /metrics, POST /admin/swap.
class HttpFrontend {
 public:
  explicit HttpFrontend(RelevanceService& service);
  ~HttpFrontend();
  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace forge::serving
