#include <cmath>
#include <map>

#include "forge/dke/dke.hpp"
#include "forge/icp/icp.hpp"
#include "unit/support.hpp"

using namespace forge;
using namespace forge::dke;

namespace {

Vocab small_vocab() {
  return Vocab::build({"flu shot flu", "title : City Clinic", "keywords : clinic , health", "cold"});
}

JointSequence thirty_tokens(const Vocab& v) {
  std::string text;
  for (int i = 0; i < 30; ++i) text += (i ? " " : "") + std::string(i % 2 ? "flu" : "clinic");
  return plain_sequence(text, v);
}

}  // namespace

TEST_SUITE("dke") {

TEST_CASE("tokenize splits whitespace, CJK and ASCII punctuation") {
  CHECK(tokenize("City Hospital, 挂号") ==
        std::vector<std::string>{"City", "Hospital", ",", "挂", "号"});
  CHECK(tokenize("title: a|b") == std::vector<std::string>{"title", ":", "a", "|", "b"});
  CHECK(tokenize("  ").empty());
}

TEST_CASE("vocab orders by frequency then lexicographically after reserved ids") {
  const auto v = Vocab::build({"b a a", "c b a"});
  CHECK(v.size() == 8);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.token(2) == "[MASK]");
  CHECK(v.id("a") == 5);
  CHECK(v.id("b") == 6);
  CHECK(v.id("c") == 7);
  CHECK(v.id("zzz") == Vocab::kUnk);

  const auto capped = Vocab::build({"b a a", "c b a"}, 1, 7, {"c"});
  CHECK(capped.size() == 7);
  CHECK(capped.contains("c"));
  CHECK(capped.contains("a"));
  CHECK_FALSE(capped.contains("b"));

  CHECK(Vocab::parse(v.serialize()) == v);
  CHECK(v.digest() != capped.digest());
  CHECK_THROWS_AS(Vocab::from_tokens({"a"}), std::invalid_argument);
}

TEST_CASE("assemble_joint_sequence lays out queries then fields") {
  const auto v = small_vocab();
  const auto item = test::item("c1", {{"title", "City Clinic"}});
  const auto seq = assemble_joint_sequence({"flu shot", "flu"}, item, v);
  const TokenId S = Vocab::kStartOfPiece, E = Vocab::kEndOfPiece;
  const std::vector<TokenId> expected = {S, v.id("flu"), v.id("shot"), E, S, v.id("flu"), E,
                                         S, v.id("title"), v.id(":"), v.id("City"), v.id("Clinic"), E};
  CHECK(seq.token_ids == expected);
  CHECK(seq.segment_ids == std::vector<int>{0, 1, 1, 0, 0, 2, 0, 0, 3, 3, 3, 3, 0});
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(seq.position_ids[i] == static_cast<int>(i));
  REQUIRE(seq.piece_spans.size() == 3);
  CHECK(seq.piece_spans[0] == PieceSpan{1, 1, 3});
  CHECK(seq.piece_spans[2] == PieceSpan{3, 8, 12});
  CHECK(seq.query_pieces == 2);
  CHECK_FALSE(seq.truncated);
}

TEST_CASE("assemble_joint_sequence rejects bad inputs") {
  const auto v = small_vocab();
  const auto item = test::item("c1", {{"title", "City Clinic"}});
  CHECK_THROWS_AS(assemble_joint_sequence({}, item, v), std::invalid_argument);
  CHECK_THROWS_AS(assemble_joint_sequence({"a", "b", "c", "d", "e", "f"}, item, v),
                  std::invalid_argument);
  CHECK_THROWS_AS(assemble_joint_sequence({"flu"}, test::item("x", {}), v), std::invalid_argument);
  CHECK_THROWS_AS(assemble_joint_sequence({""}, item, v), std::invalid_argument);
  AssembleOptions opts;
  opts.allow_no_queries = true;
  CHECK(assemble_joint_sequence({}, item, v, opts).query_pieces == 0);
}

TEST_CASE("truncation drops whole trailing pieces and respects max_length") {
  const auto v = small_vocab();
  const auto item = test::item("c1", {{"title", "City Clinic"}, {"keywords", "clinic, health"}});
  AssembleOptions opts;
  opts.max_length = 8;
  const auto seq = assemble_joint_sequence({"flu shot", "flu"}, item, v, opts);
  CHECK(seq.truncated);
  CHECK(seq.size() == 7);
  CHECK(seq.piece_spans.size() == 2);
  for (std::size_t len = 3; len < 40; ++len) {
    opts.max_length = len;
    const auto s = assemble_joint_sequence({"flu shot", "flu", "cold"}, item, v, opts);
    CHECK(s.size() <= len);
    CHECK(s.token_ids.front() == Vocab::kStartOfPiece);
    CHECK(s.token_ids.back() == Vocab::kEndOfPiece);
  }
}

TEST_CASE("token mask invariants") {
  const auto v = small_vocab();
  const auto item = test::item("c1", {{"title", "City Clinic"}});
  const auto seq = assemble_joint_sequence({"flu shot", "flu"}, item, v);
  MaskConfig cfg;
  Rng rng(1);
  for (int n = 0; n < 500; ++n) {
    const auto ex = apply_token_mask(seq, cfg, rng, v.size());
    CHECK_FALSE(ex.masked_positions.empty());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const bool masked =
          std::find(ex.masked_positions.begin(), ex.masked_positions.end(), i) != ex.masked_positions.end();
      if (masked) {
        CHECK_FALSE(Vocab::is_separator(seq.token_ids[i]));
        CHECK(ex.labels[i] == seq.token_ids[i]);
      } else {
        CHECK(ex.labels[i] == kIgnoreLabel);
        CHECK(ex.input_ids[i] == seq.token_ids[i]);
      }
    }
    CHECK(ex.segment_ids == seq.segment_ids);
  }
}

TEST_CASE("token mask rate and 80/10/10 replacement frequencies") {
  const auto v = small_vocab();
  std::string text;
  for (int i = 0; i < 1000; ++i) text += "flu ";
  const auto seq = plain_sequence(text, v, 1000);
  REQUIRE(seq.size() == 1000);
  MaskConfig cfg;
  Rng rng(2);
  std::size_t masked = 0, to_mask = 0, kept = 0, random = 0;
  for (int n = 0; n < 100; ++n) {
    const auto ex = apply_token_mask(seq, cfg, rng, v.size());
    masked += ex.masked_positions.size();
    for (auto p : ex.masked_positions) {
      if (ex.input_ids[p] == Vocab::kMask) ++to_mask;
      else if (ex.input_ids[p] == seq.token_ids[p]) ++kept;
      else ++random;
    }
  }
  // 100000 Bernoulli(0.15) trials: sd ~ 113. Random draws may hit the
  // original token (1 / (|V| - 5)), which moves a little mass into "kept".
  CHECK(std::abs(static_cast<double>(masked) - 15000.0) < 600.0);
  const double m = static_cast<double>(masked);
  CHECK(std::abs(to_mask / m - 0.8) < 0.02);
  CHECK(std::abs((kept + random) / m - 0.2) < 0.02);
  CHECK(random > 0);
}

TEST_CASE("token mask with seed 42 on 30 tokens matches the frozen golden") {
  const auto v = small_vocab();
  Rng rng(42);
  const auto ex = apply_token_mask(thirty_tokens(v), MaskConfig{}, rng, v.size());
  nlohmann::ordered_json j;
  j["input_ids"] = ex.input_ids;
  j["labels"] = ex.labels;
  j["masked_positions"] = ex.masked_positions;
  test::check_golden("token_mask_seed42.json", j.dump() + "\n");
}

TEST_CASE("segment mask covers exactly one piece, chosen uniformly") {
  const auto v = small_vocab();
  const auto item = test::item("c1", {{"title", "City Clinic"}, {"keywords", "clinic"}});
  const auto seq = assemble_joint_sequence({"flu shot", "flu"}, item, v);
  REQUIRE(seq.piece_spans.size() == 4);
  Rng rng(3);
  std::map<std::size_t, int> hits;
  const int draws = 8000;
  for (int n = 0; n < draws; ++n) {
    const auto ex = apply_segment_mask(seq, rng);
    REQUIRE_FALSE(ex.masked_positions.empty());
    const std::size_t first = ex.masked_positions.front();
    std::size_t which = seq.piece_spans.size();
    for (std::size_t p = 0; p < seq.piece_spans.size(); ++p) {
      if (seq.piece_spans[p].start == first) which = p;
    }
    REQUIRE(which < seq.piece_spans.size());
    const auto& span = seq.piece_spans[which];
    CHECK(ex.masked_positions.size() == span.end - span.start);
    for (auto pos : ex.masked_positions) {
      CHECK(ex.input_ids[pos] == Vocab::kMask);
      CHECK(ex.labels[pos] == seq.token_ids[pos]);
    }
    ++hits[which];
  }
  for (const auto& [piece, n] : hits) CHECK(std::abs(n - draws / 4) < 200);  // sd ~ 39
}

TEST_CASE("emit keeps the top-k queries by clicks") {
  const auto v = Vocab::build({"q1 q2 q3 q4 q5 q6 q7 title : Clinic"});
  corpus::Catalog cat;
  cat["a"] = test::item("a", {{"title", "Clinic"}});
  std::vector<corpus::ClickRecord> clicks;
  for (int i = 1; i <= 7; ++i) clicks.push_back({"q" + std::to_string(i), "a", 10 - i});
  const auto m = icp::build_mappings(clicks);
  const auto r = emit_dke_examples(cat, m.i2q, v, 5, {});
  REQUIRE(r.pairs.size() == 1);
  const auto expected = assemble_joint_sequence({"q1", "q2", "q3", "q4", "q5"}, cat["a"], v);
  const auto& ex = r.pairs[0].token;
  std::vector<TokenId> original;
  for (std::size_t i = 0; i < ex.input_ids.size(); ++i) {
    original.push_back(ex.labels[i] != kIgnoreLabel ? ex.labels[i] : ex.input_ids[i]);
  }
  CHECK(original == expected.token_ids);
  CHECK(r.pairs[0].segment.segment_ids == expected.segment_ids);
  CHECK(r.stats.item_only == 0);
}

TEST_CASE("emit falls back to item-only sequences and scales with items") {
  const auto v = Vocab::build({"title : Clinic 0 1 2 3 4 5 6 7 8 9"});
  corpus::Catalog cat;
  for (int i = 0; i < 20; ++i) {
    cat["i" + std::to_string(i)] = test::item("i" + std::to_string(i), {{"title", "Clinic " + std::to_string(i % 10)}});
  }
  const auto r = emit_dke_examples(cat, {}, v, 5, {});
  CHECK(r.pairs.size() == 20);
  CHECK(r.stats.item_only == 20);
  std::size_t lines = 0;
  for (const auto& p : r.pairs) {
    CHECK(p.token.kind == MaskKind::token);
    CHECK(p.segment.kind == MaskKind::segment);
    lines += 2;
  }
  CHECK(lines == 40);
  CHECK(emit_dke_examples(cat, {}, v, 5, {}, 3).pairs.size() == 60);
}

TEST_CASE("emit is independent of job count and round-trips through JSON") {
  const auto cat = corpus::load_item_catalog(test::fixture("icp_items.jsonl").string()).items;
  const auto clicks = corpus::load_click_log(test::fixture("icp_clicks_200.jsonl").string()).records;
  std::vector<std::string> texts;
  for (const auto& [id, doc] : cat) {
    for (const auto& [k, val] : doc.fields) texts.push_back(k + ": " + val);
  }
  for (const auto& c : clicks) texts.push_back(c.query);
  const auto v = Vocab::build(texts);
  const auto m = icp::build_mappings(clicks);
  const auto a = emit_dke_examples(cat, m.i2q, v, 5, {}, 2, 1);
  const auto b = emit_dke_examples(cat, m.i2q, v, 5, {}, 2, 4);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].token == b.pairs[i].token);
    CHECK(a.pairs[i].segment == b.pairs[i].segment);
    CHECK(masked_example_from_json(nlohmann::json::parse(to_json(a.pairs[i], MaskKind::token).dump())) ==
          a.pairs[i].token);
    CHECK(masked_example_from_json(nlohmann::json::parse(to_json(a.pairs[i], MaskKind::segment).dump())) ==
          a.pairs[i].segment);
  }
}

TEST_CASE("mask config validation") {
  MaskConfig c;
  c.token_mask_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.keep_prob = 0.2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

}  // TEST_SUITE
