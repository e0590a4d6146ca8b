#include "forge/metrics/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>

#include "forge/corpus/corpus.hpp"
#include "forge/util/unicode.hpp"

namespace forge::metrics {

namespace {
constexpr std::size_t kDefaultEdges[] = {5, 10, 15};

void require_nonempty(std::span<const EvalRecord> records, const char* what) {
  if (records.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}
}  // namespace

EvalRecord make_record(std::string query, double score, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  return {std::move(query), score, score >= 0.5 ? 1 : 0, label};
}

double accuracy(std::span<const EvalRecord> records) {
  require_nonempty(records, "accuracy");
  std::size_t correct = 0;
  for (const auto& r : records) correct += r.pred == r.label;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double f1(std::span<const EvalRecord> records) {
  require_nonempty(records, "f1");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    if (r.pred == 1 && r.label == 1) ++tp;
    else if (r.pred == 1) ++fp;
    else if (r.label == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double rc = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * rc / (p + rc);
}

double auc(std::span<const EvalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });
  std::uint64_t pos = 0;
  for (const auto& r : records) pos += r.label == 1;
  const std::uint64_t neg = records.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc undefined: need both classes");

  // Twice the positive rank sum, kept integral so the result is exact.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && records[order[j]].score == records[order[i]].score) ++j;
    const std::uint64_t twice_avg_rank = (i + 1) + j;
    for (std::size_t k = i; k < j; ++k) {
      if (records[order[k]].label == 1) twice_rank_sum += twice_avg_rank;
    }
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * pos * neg);
}

std::size_t query_length(std::string_view query) {
  return unicode::codepoint_count(corpus::normalize_text(query));
}

std::vector<Bucket> bucketed_auc(std::span<const EvalRecord> records,
                                 std::span<const std::size_t> edges) {
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end() ||
      (!edges.empty() && edges.front() == 0)) {
    throw std::invalid_argument("bucket edges must be positive and strictly increasing");
  }
  std::vector<Bucket> buckets(edges.size() + 1);
  std::size_t lo = 1;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    buckets[i].lo = lo;
    buckets[i].hi = edges[i];
    lo = edges[i] + 1;
  }
  buckets.back().lo = lo;

  std::vector<std::vector<EvalRecord>> split(buckets.size());
  for (const auto& r : records) {
    const std::size_t len = query_length(r.query);
    const std::size_t b = static_cast<std::size_t>(
        std::lower_bound(edges.begin(), edges.end(), len) - edges.begin());
    split[b].push_back(r);
  }
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    buckets[i].count = split[i].size();
    for (const auto& r : split[i]) buckets[i].positives += r.label == 1;
    if (buckets[i].positives > 0 && buckets[i].positives < buckets[i].count) {
      buckets[i].auc = auc(split[i]);
    }
  }
  return buckets;
}

std::vector<Bucket> bucketed_auc(std::span<const EvalRecord> records) {
  return bucketed_auc(records, kDefaultEdges);
}

EvalReport evaluate(std::span<const EvalRecord> records, std::span<const std::size_t> edges) {
  EvalReport rep;
  rep.count = records.size();
  rep.acc = accuracy(records);
  rep.f1 = f1(records);
  try {
    rep.auc = auc(records);
  } catch (const std::invalid_argument&) {
  }
  rep.buckets = bucketed_auc(records, edges);
  return rep;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["count"] = report.count;
  j["acc"] = report.acc;
  j["f1"] = report.f1;
  j["auc"] = report.auc ? nlohmann::ordered_json(*report.auc) : nlohmann::ordered_json(nullptr);
  auto& arr = j["buckets"] = nlohmann::ordered_json::array();
  for (const auto& b : report.buckets) {
    nlohmann::ordered_json e;
    e["lo"] = b.lo;
    e["hi"] = b.hi ? nlohmann::ordered_json(*b.hi) : nlohmann::ordered_json(nullptr);
    e["count"] = b.count;
    e["positives"] = b.positives;
    e["auc"] = b.auc ? nlohmann::ordered_json(*b.auc) : nlohmann::ordered_json(nullptr);
    arr.push_back(std::move(e));
  }
  return j;
}

}  // namespace forge::metrics
