#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/corpus/corpus.hpp"
#include "forge/embed/embedder.hpp"
#include "forge/rcd/prompts.hpp"
#include "forge/rcd/teacher.hpp"

namespace forge::rcd {

struct GeneratedQuery {
  std::string text;
  std::string reason;
  bool operator==(const GeneratedQuery&) const = default;
};

struct RcdOutput {
  std::string item_id;
  std::string summary;
  std::string background;
  std::vector<GeneratedQuery> queries;
  bool operator==(const RcdOutput&) const = default;
};

/// Raised by the response parsers; carries the offending payload.
class ResponseParseError : public std::runtime_error {
 public:
  ResponseParseError(const std::string& what, std::string raw)
      : std::runtime_error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

struct SummaryResponse {
  std::string summary;
  std::string background;
};

/// Tolerant section parsers: labels are case-insensitive, may carry a
/// number ("Query 2:") and leading list markers; unlabeled lines continue the
/// previous section.
SummaryResponse parse_summary_response(const std::string& text);
std::vector<std::string> parse_queries_response(const std::string& text);
/// Reasons aligned to n queries; numbered reasons go to their slot, unnumbered
/// ones fill slots in order. Missing reasons are empty.
std::vector<std::string> parse_reasons_response(const std::string& text, std::size_t n);

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff{1000};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Raw teacher responses keyed by (item_id, prompt-set digest).
class RcdCache {
 public:
  explicit RcdCache(std::filesystem::path dir);
  std::optional<std::array<std::string, 3>> get(std::string_view item_id,
                                                std::string_view prompts_digest) const;
  void put(std::string_view item_id, std::string_view prompts_digest,
           const std::array<std::string, 3>& responses) const;

 private:
  std::filesystem::path file_for(std::string_view item_id, std::string_view digest) const;
  std::filesystem::path dir_;
};

struct GenerateOutcome {
  std::optional<RcdOutput> output;
  std::string reason;  // empty on success
  std::string detail;
  std::string raw;  // offending payload for malformed responses
  std::array<std::size_t, 3> attempts{};
  bool from_cache = false;
};

/// Three teacher calls (the third sees the parsed queries), each retried on
/// transient errors with backoff * 2^attempt between tries. Reason codes:
/// retries_exhausted, teacher_error, malformed_response, missing_title.
GenerateOutcome generate(TeacherClient& client, const corpus::ItemDoc& item,
                         const RcdPromptSet& prompts, const RetryPolicy& retry,
                         const Sleeper& sleep, const RcdCache* cache = nullptr);

struct RcdValidateConfig {
  double sigma_rcd = 0.2;
  std::size_t max_query_chars = 64;
  std::size_t min_summary_chars = 10;
  std::size_t max_queries = 20;
};

struct ValidationOutcome {
  std::optional<RcdOutput> output;
  std::string reason;  // summary_too_short or no_valid_queries on rejection
  std::size_t dropped_duplicate = 0;
  std::size_t dropped_length = 0;
  std::size_t dropped_similarity = 0;
  std::size_t dropped_empty = 0;
};

/// Text generated queries are compared against: every field value joined
/// with " | " (category excluded), since the teacher saw all of them.
std::string validation_text(const corpus::ItemDoc& item);

ValidationOutcome validate_rcd_output(const RcdOutput& out, const corpus::ItemDoc& item,
                                      const embed::TextEncoder& encoder,
                                      const RcdValidateConfig& cfg = {});

struct RcdInstance {
  std::string item_id;
  std::string kind;  // "summary" or "queries"
  std::string text;
  bool operator==(const RcdInstance&) const = default;
};

/// One summary(+background) document and one query/reason document.
std::vector<RcdInstance> emit_rcd_examples(const RcdOutput& out, const corpus::ItemDoc& item);

struct RcdConfig {
  RcdPromptSet prompts;
  RetryPolicy retry;
  RcdValidateConfig validate;
  std::size_t parallelism = 4;
};

struct RcdFailure {
  std::string item_id;
  std::string reason;
  std::string detail;
};

struct RcdRunStats {
  std::size_t items = 0;
  std::size_t accepted = 0;
  std::size_t cache_hits = 0;
  std::size_t dropped_queries = 0;
};

struct RcdRunResult {
  std::vector<RcdInstance> instances;  // item_id order
  std::vector<RcdFailure> failures;    // item_id order
  RcdRunStats stats;
  RenderCounters counters;
};

/// Runs every catalog item; a failing item is reported, never fatal.
RcdRunResult run_rcd(const corpus::Catalog& catalog, TeacherClient& client,
                     const embed::TextEncoder& encoder, const RcdConfig& cfg,
                     const Sleeper& sleep, const RcdCache* cache = nullptr);

nlohmann::ordered_json to_json(const RcdInstance& inst);
RcdInstance rcd_instance_from_json(const nlohmann::json& j);
nlohmann::ordered_json failure_report(const RcdRunResult& result);

}  // namespace forge::rcd
