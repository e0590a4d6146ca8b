#include <sstream>

#include "forge/util/rng.hpp"
#include "forge/util/unicode.hpp"
#include "unit/support.hpp"

using namespace forge;
using namespace forge::corpus;

TEST_SUITE("corpus") {

TEST_CASE("normalize_text collapses and strips whitespace") {
  CHECK(normalize_text("  city  hospital ") == "city hospital");
  CHECK(normalize_text("") == "");
  CHECK(normalize_text("\t a \n\n b \r") == "a b");
  CHECK(normalize_text("Flu Shot") == "Flu Shot");  // no case folding
  // ideographic space is whitespace too
  CHECK(normalize_text("\xE3\x80\x80" "挂号\xE3\x80\x80" "医院") == "挂号 医院");
}

TEST_CASE("normalize_text composes to NFC like a reference normalizer") {
  // Expected values come from Python's unicodedata.normalize("NFC", ...).
  auto lines = test::read_lines(test::fixture("nfc_cases.jsonl"));
  REQUIRE(lines.size() == 20);
  for (const auto& line : lines) {
    auto j = nlohmann::json::parse(line);
    CHECK(normalize_text(j["raw"].get<std::string>()) == j["nfc"].get<std::string>());
  }
}

TEST_CASE("normalize_text is idempotent on fuzzed text") {
  Rng rng(11);
  const char32_t alphabet[] = {U'a', U'Z', U' ', U'\t', U'\n', U'e', 0x301, 0x308, 0x3000,
                               U'挂', U'号', 0x1100, 0x1161, 0x11a8, U'.', 0x212b, 0xa0};
  for (int n = 0; n < 2000; ++n) {
    std::string s;
    const std::size_t len = rng.index(12);
    for (std::size_t i = 0; i < len; ++i) {
      unicode::append_utf8(s, alphabet[rng.index(std::size(alphabet))]);
    }
    const std::string once = normalize_text(s);
    CHECK(normalize_text(once) == once);
  }
}

TEST_CASE("parse_click_record maps fields and normalizes the query") {
  CHECK(parse_click_record(R"({"query":"flu shot","item_id":"app1","clicks":3})") ==
        ClickRecord{"flu shot", "app1", 3});
  CHECK(parse_click_record(R"({"query":" flu  shot ","item_id":"app1","clicks":3})").query ==
        "flu shot");
  CHECK_THROWS_AS(parse_click_record(R"({"query":"q","item_id":"a","clicks":-1})"), RecordError);
  CHECK_THROWS_AS(parse_click_record(R"({"query":"   ","item_id":"a","clicks":1})"), RecordError);
  CHECK_THROWS_AS(parse_click_record("not json"), RecordError);
}

TEST_CASE("click log fixture: 98 records and 2 positioned errors") {
  std::ifstream in(test::fixture("clicks_100.jsonl"));
  const auto r = parse_click_log(in);
  CHECK(r.records.size() == 98);
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].line == 17);
  CHECK(r.errors[1].line == 63);
  CHECK(r.records.size() + r.errors.size() == r.lines);
}

TEST_CASE("parse_item_catalog keeps field order and counts duplicates") {
  const auto doc = parse_item_record(R"({"item_id":"a","title":"City Hospital","category":"healthcare"})");
  CHECK(doc.item_id == "a");
  REQUIRE(doc.fields.size() == 2);
  CHECK(doc.fields[0] == std::pair<std::string, std::string>{"title", "City Hospital"});
  CHECK(doc.fields[1].first == "category");

  std::istringstream two(R"({"item_id":"a","title":"old"}
{"item_id":"a","title":"new"}
)");
  const auto r = parse_item_catalog(two);
  CHECK(r.items.size() == 1);
  CHECK(r.duplicates == 1);
  CHECK(r.items.at("a").field("title") == "new");

  std::istringstream missing(R"({"title":"no id"})");
  const auto m = parse_item_catalog(missing);
  CHECK(m.items.empty());
  REQUIRE(m.errors.size() == 1);
  CHECK(m.errors[0].line == 1);
}

TEST_CASE("catalog fixture round-trips with field names in input order") {
  const auto lines = test::read_lines(test::fixture("catalog_50.jsonl"));
  const auto r = load_item_catalog(test::fixture("catalog_50.jsonl").string());
  REQUIRE(r.items.size() == 50);
  CHECK(r.errors.empty());
  for (const auto& line : lines) {
    // nlohmann::ordered_json keeps key order, giving an independent view of
    // the expected field sequence.
    auto j = nlohmann::ordered_json::parse(line);
    const ItemDoc& doc = r.items.at(j["item_id"].get<std::string>());
    std::vector<std::string> expected;
    for (auto& [k, v] : j.items()) {
      if (k != "item_id") expected.push_back(k);
    }
    std::vector<std::string> got;
    for (const auto& [k, v] : doc.fields) got.push_back(k);
    CHECK(got == expected);
    CHECK(parse_item_record(serialize(doc)) == doc);
  }
}

TEST_CASE("labeled triples coerce string labels and reject others") {
  CHECK(parse_labeled_triple(R"({"query":"q","item_id":"a","label":1})") ==
        LabeledTriple{"q", "a", 1});
  CHECK(parse_labeled_triple(R"({"query":"q","item_id":"a","label":"0"})").label == 0);
  CHECK(parse_labeled_triple(R"({"query":"q","item_id":"a","label":"1"})").label == 1);
  CHECK_THROWS_AS(parse_labeled_triple(R"({"query":"q","item_id":"a","label":"2"})"), RecordError);
  CHECK_THROWS_AS(parse_labeled_triple(R"({"query":"q","item_id":"a","label":2})"), RecordError);
  CHECK_THROWS_AS(parse_labeled_triple(R"({"query":"q","item_id":"a","label":0.5})"), RecordError);

  std::istringstream in(R"({"query":"q","item_id":"a","label":1}
{"query":"q","item_id":"a","label":"2"}
)");
  const auto r = parse_labeled_triples(in);
  CHECK(r.records.size() == 1);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].line == 2);
}

TEST_CASE("triples fixture tallies 10 relevant and 6 irrelevant") {
  const auto r = load_labeled_triples(test::fixture("triples_16.jsonl").string());
  REQUIRE(r.errors.empty());
  std::size_t pos = 0, neg = 0;
  for (const auto& t : r.records) (t.label == 1 ? pos : neg)++;
  CHECK(pos == 10);
  CHECK(neg == 6);
}

TEST_CASE("serialize and parse round-trip fuzzed records") {
  Rng rng(5);
  const std::vector<std::string> words = {"flu", "shot", "挂号", "Café", "a,b", "x\"y", "bank"};
  for (int n = 0; n < 300; ++n) {
    ClickRecord c{words[rng.index(words.size())] + " " + words[rng.index(words.size())],
                  "app" + std::to_string(rng.index(50)), static_cast<std::int64_t>(rng.index(100))};
    CHECK(parse_click_record(serialize(c)) == c);
    LabeledTriple t{c.query, c.item_id, static_cast<int>(rng.index(2))};
    CHECK(parse_labeled_triple(serialize(t)) == t);
    ItemDoc d{"it" + std::to_string(n), {}};
    const std::size_t nf = 1 + rng.index(4);
    for (std::size_t f = 0; f < nf; ++f) {
      d.fields.emplace_back("f" + std::to_string(f), words[rng.index(words.size())]);
    }
    CHECK(parse_item_record(serialize(d)) == d);
  }
}

TEST_CASE("parsers never abort: errors + records = lines") {
  Rng rng(9);
  const std::vector<std::string> good = {R"({"query":"q","item_id":"a","clicks":1})",
                                         R"({"query":"r","item_id":"b","clicks":0})"};
  const std::vector<std::string> bad = {"{", "[]", R"({"query":"q"})", R"({"query":"q","item_id":"a","clicks":"x"})",
                                        R"({"query":"","item_id":"a","clicks":1})"};
  for (int round = 0; round < 50; ++round) {
    std::string text;
    std::size_t lines = 0;
    for (std::size_t i = 0; i < 1 + rng.index(30); ++i) {
      text += rng.bernoulli(0.5) ? good[rng.index(good.size())] : bad[rng.index(bad.size())];
      text += '\n';
      ++lines;
    }
    std::istringstream in(text);
    const auto r = parse_click_log(in);
    CHECK(r.records.size() + r.errors.size() == lines);
    CHECK(r.lines == lines);
  }
}

TEST_CASE("item_text joins title and keywords") {
  const auto doc = test::item("a", {{"title", "City Clinic"}, {"keywords", "clinic,health"},
                                    {"category", "medical"}});
  CHECK(item_text(doc) == "City Clinic | clinic,health");
  CHECK(item_text(test::item("b", {{"category", "x"}})) == "x");
}

}  // TEST_SUITE
