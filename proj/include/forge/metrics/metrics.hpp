#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge::metrics {

struct EvalRecord {
  std::string query;
  double score = 0.0;
  int pred = 0;
  int label = 0;
};

/// pred is derived as score >= 0.5. Throws on a label outside {0,1}.
EvalRecord make_record(std::string query, double score, int label);

/// All three throw std::invalid_argument on empty input.
double accuracy(std::span<const EvalRecord> records);
/// Positive class is label 1; 0 when precision or recall is undefined.
double f1(std::span<const EvalRecord> records);
/// Mann-Whitney AUC with ties counted half, via average ranks. Throws
/// std::invalid_argument("auc undefined ...") unless both classes occur.
double auc(std::span<const EvalRecord> records);

struct Bucket {
  std::size_t lo = 1;
  std::optional<std::size_t> hi;  // inclusive; nullopt = unbounded
  std::size_t count = 0;
  std::size_t positives = 0;
  std::optional<double> auc;  // nullopt when single-class or empty
};

/// Query length in codepoints of the normalized query.
std::size_t query_length(std::string_view query);

/// Edges {5,10,15} give [1,5], [6,10], [11,15], [16,inf).
std::vector<Bucket> bucketed_auc(std::span<const EvalRecord> records,
                                 std::span<const std::size_t> edges);
std::vector<Bucket> bucketed_auc(std::span<const EvalRecord> records);

struct EvalReport {
  std::size_t count = 0;
  double acc = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  std::vector<Bucket> buckets;
};

EvalReport evaluate(std::span<const EvalRecord> records, std::span<const std::size_t> edges);
nlohmann::ordered_json to_json(const EvalReport& report);

}  // namespace forge::metrics
