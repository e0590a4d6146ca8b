#include <cmath>

#include "forge/metrics/metrics.hpp"
#include "forge/util/rng.hpp"
#include "unit/support.hpp"

using namespace forge;
using namespace forge::metrics;

namespace {

std::vector<EvalRecord> records(const std::vector<std::pair<double, int>>& rows, std::string q = "q") {
  std::vector<EvalRecord> out;
  for (auto [s, l] : rows) out.push_back(make_record(q, s, l));
  return out;
}

// Pair counting over every (positive, negative) combination.
double pairwise_auc(const std::vector<EvalRecord>& r) {
  double wins = 0;
  std::size_t pairs = 0;
  for (const auto& p : r) {
    if (p.label != 1) continue;
    for (const auto& n : r) {
      if (n.label != 0) continue;
      ++pairs;
      wins += p.score > n.score ? 1.0 : p.score == n.score ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

double naive_f1(const std::vector<EvalRecord>& r) {
  double tp = 0, fp = 0, fn = 0;
  for (const auto& x : r) {
    const int pred = x.score >= 0.5;
    tp += pred && x.label;
    fp += pred && !x.label;
    fn += !pred && x.label;
  }
  if (tp == 0) return 0.0;
  const double p = tp / (tp + fp), rc = tp / (tp + fn);
  return 2 * p * rc / (p + rc);
}

std::vector<EvalRecord> fuzz_records(Rng& rng, std::size_t n) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string q(1 + rng.index(20), 'a');
    // coarse scores so ties happen
    out.push_back(make_record(q, static_cast<double>(rng.index(11)) / 10.0, rng.bernoulli(0.4)));
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand-computed accuracy, F1 and AUC") {
  const auto r = records({{0.9, 1}, {0.8, 0}, {0.4, 1}, {0.1, 0}});
  CHECK(accuracy(r) == doctest::Approx(0.5));
  CHECK(f1(r) == doctest::Approx(0.5));  // tp 1, fp 1, fn 1
  CHECK(auc(r) == doctest::Approx(0.75));

  CHECK(auc(records({{0.5, 1}, {0.5, 0}})) == doctest::Approx(0.5));
  CHECK(auc(records({{0.9, 1}, {0.1, 0}})) == 1.0);
  CHECK(auc(records({{0.1, 1}, {0.9, 0}})) == 0.0);
  CHECK(f1(records({{0.1, 1}, {0.2, 0}})) == 0.0);

  CHECK(make_record("q", 0.5, 0).pred == 1);
  CHECK(make_record("q", 0.4999, 1).pred == 0);
  CHECK_THROWS_AS(make_record("q", 0.5, 2), std::invalid_argument);
}

TEST_CASE("empty and single-class inputs throw") {
  const std::vector<EvalRecord> none;
  CHECK_THROWS_AS(accuracy(none), std::invalid_argument);
  CHECK_THROWS_AS(f1(none), std::invalid_argument);
  CHECK_THROWS_AS(auc(none), std::invalid_argument);
  CHECK_THROWS_WITH_AS(auc(records({{0.3, 1}, {0.7, 1}})), doctest::Contains("auc undefined"),
                       std::invalid_argument);
}

TEST_CASE("metrics agree with naive oracles on random data") {
  Rng rng(21);
  for (int round = 0; round < 200; ++round) {
    auto r = fuzz_records(rng, 2 + rng.index(60));
    r.push_back(make_record("a", 0.3, 0));
    r.push_back(make_record("b", 0.6, 1));
    CHECK(auc(r) == doctest::Approx(pairwise_auc(r)).epsilon(1e-12));
    CHECK(f1(r) == doctest::Approx(naive_f1(r)).epsilon(1e-12));
    double correct = 0;
    for (const auto& x : r) correct += (x.score >= 0.5) == (x.label == 1);
    CHECK(accuracy(r) == doctest::Approx(correct / r.size()));
  }
}

TEST_CASE("AUC is invariant under a strictly increasing transform") {
  Rng rng(22);
  for (int round = 0; round < 100; ++round) {
    auto r = fuzz_records(rng, 40);
    r.push_back(make_record("a", 0.3, 0));
    r.push_back(make_record("b", 0.6, 1));
    auto cubed = r;
    for (auto& x : cubed) x.score = x.score * x.score * x.score;
    CHECK(auc(cubed) == doctest::Approx(auc(r)).epsilon(1e-12));
  }
}

TEST_CASE("query length counts codepoints of the normalized query") {
  CHECK(query_length("flu") == 3);
  CHECK(query_length("  flu   shot ") == 8);
  CHECK(query_length("挂号") == 2);
}

TEST_CASE("bucket boundaries follow the edges") {
  std::vector<EvalRecord> r;
  for (std::size_t len : {1u, 5u, 6u, 10u, 11u, 15u, 16u, 40u}) {
    r.push_back(make_record(std::string(len, 'x'), 0.5, 1));
  }
  const auto b = bucketed_auc(r);
  REQUIRE(b.size() == 4);
  CHECK(b[0].lo == 1);
  CHECK(b[0].hi == 5u);
  CHECK(b[1].lo == 6);
  CHECK(b[3].lo == 16);
  CHECK_FALSE(b[3].hi.has_value());
  for (const auto& x : b) {
    CHECK(x.count == 2);
    CHECK_FALSE(x.auc.has_value());  // single class
  }
}

TEST_CASE("a 200-record split partitions records and matches per-bucket oracles") {
  Rng rng(23);
  auto r = fuzz_records(rng, 200);
  const std::vector<std::size_t> edges = {5, 10, 15};
  const auto buckets = bucketed_auc(r, edges);
  std::size_t total = 0;
  for (const auto& b : buckets) {
    std::vector<EvalRecord> sub;
    for (const auto& x : r) {
      const auto len = query_length(x.query);
      if (len >= b.lo && (!b.hi || len <= *b.hi)) sub.push_back(x);
    }
    CHECK(b.count == sub.size());
    std::size_t pos = 0;
    for (const auto& x : sub) pos += x.label;
    CHECK(b.positives == pos);
    if (pos > 0 && pos < sub.size()) {
      REQUIRE(b.auc.has_value());
      CHECK(*b.auc == doctest::Approx(pairwise_auc(sub)).epsilon(1e-12));
    } else {
      CHECK_FALSE(b.auc.has_value());
    }
    total += b.count;
  }
  CHECK(total == 200);

  const auto rep = evaluate(r, edges);
  CHECK(rep.count == 200);
  CHECK(rep.auc.has_value());
  const auto j = to_json(rep);
  for (const char* key : {"count", "acc", "f1", "auc", "buckets"}) CHECK(j.contains(key));
}

}  // TEST_SUITE
