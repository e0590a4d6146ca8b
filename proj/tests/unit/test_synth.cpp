#include <regex>
#include <set>

#include "forge/synth/world.hpp"
#include "unit/support.hpp"

using namespace forge;
using namespace forge::synth;

namespace {

// Words made of letters and digits, counted independently of the tokenizer.
std::set<std::string> words(const std::string& text) {
  static const std::regex word("[A-Za-z0-9]+");
  std::set<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), word); it != std::sregex_iterator(); ++it) {
    out.insert(it->str());
  }
  return out;
}

bool oracle_relevant(const std::string& query, const corpus::ItemDoc& item, std::size_t min_shared) {
  std::set<std::string> item_words;
  for (const auto& [k, v] : item.fields) {
    if (k == "category") continue;
    for (auto& w : words(v)) item_words.insert(w);
  }
  std::size_t shared = 0;
  for (const auto& w : words(query)) shared += item_words.count(w);
  return shared >= min_shared;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is deterministic per seed") {
  auto cfg = preset("tiny");
  const auto a = generate_world(cfg);
  const auto b = generate_world(cfg);
  CHECK(a.items == b.items);
  CHECK(a.clicks == b.clicks);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  cfg.seed = 2;
  CHECK(generate_world(cfg).clicks != a.clicks);
}

TEST_CASE("sizes follow the config") {
  const auto cfg = preset("tiny");
  const auto w = generate_world(cfg);
  CHECK(w.items.size() == cfg.n_items);
  CHECK(w.queries.size() == cfg.n_queries);
  CHECK(w.clicks.size() == cfg.n_clicks);
  CHECK(w.train.size() == cfg.n_train);
  CHECK(w.valid.size() == cfg.n_valid);
  CHECK(w.test.size() == cfg.n_test);
  CHECK(w.catalog().size() == cfg.n_items);
}

TEST_CASE("with zero noise every click satisfies the relevance rule") {
  auto cfg = preset("tiny");
  cfg.noise_rate = 0.0;
  const auto w = generate_world(cfg);
  const auto cat = w.catalog();
  for (const auto& c : w.clicks) {
    CHECK(oracle_relevant(c.query, cat.at(c.item_id), cfg.relevance_min_shared));
  }
  cfg.noise_rate = 0.3;
  const auto noisy = generate_world(cfg);
  std::size_t off = 0;
  for (const auto& c : noisy.clicks) off += !oracle_relevant(c.query, cat.at(c.item_id), 2);
  CHECK(off > cfg.n_clicks / 5);
}

TEST_CASE("labels are the ground-truth rule") {
  const auto cfg = preset("tiny");
  const auto w = generate_world(cfg);
  const auto cat = w.catalog();
  for (const auto* split : {&w.train, &w.valid, &w.test}) {
    for (const auto& t : *split) {
      CHECK(t.label == (oracle_relevant(t.query, cat.at(t.item_id), cfg.relevance_min_shared) ? 1 : 0));
      CHECK(t.label == (is_relevant(t.query, cat.at(t.item_id), cfg.relevance_min_shared) ? 1 : 0));
    }
  }
}

TEST_CASE("label balance tracks positive_fraction") {
  for (double frac : {0.3, 0.6}) {
    auto cfg = preset("tiny");
    cfg.positive_fraction = frac;
    const auto w = generate_world(cfg);
    double pos = 0;
    for (const auto& t : w.train) pos += t.label;
    // 400 draws: sd ~ 0.025
    CHECK(std::abs(pos / w.train.size() - frac) < 0.08);
  }
}

TEST_CASE("splits share no queries and hold no duplicate pairs") {
  const auto w = generate_world(preset("tiny"));
  auto queries_of = [](const std::vector<corpus::LabeledTriple>& s) {
    std::set<std::string> q;
    for (const auto& t : s) q.insert(t.query);
    return q;
  };
  const auto tr = queries_of(w.train), va = queries_of(w.valid), te = queries_of(w.test);
  for (const auto& q : va) CHECK(tr.count(q) == 0);
  for (const auto& q : te) {
    CHECK(tr.count(q) == 0);
    CHECK(va.count(q) == 0);
  }
  for (const auto* split : {&w.train, &w.valid, &w.test}) {
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& t : *split) CHECK(pairs.insert({t.query, t.item_id}).second);
  }
}

TEST_CASE("infeasible configs are rejected") {
  auto cfg = preset("tiny");
  cfg.n_queries = 2;
  CHECK_THROWS_AS(generate_world(cfg), std::invalid_argument);
  cfg = preset("tiny");
  cfg.n_train = 1000000;
  CHECK_THROWS_AS(generate_world(cfg), std::invalid_argument);
  cfg = preset("tiny");
  cfg.noise_rate = 0.7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(preset("huge"), std::invalid_argument);
}

TEST_CASE("write_world emits five headed JSONL files") {
  test::TempDir dir("world");
  const auto w = generate_world(preset("tiny"));
  write_world(w, dir.path(), "digest", 7);
  for (const char* name : {"items", "clicks", "train", "valid", "test"}) {
    const auto lines = test::read_lines(dir / (std::string(name) + ".jsonl"));
    REQUIRE_FALSE(lines.empty());
    const auto h = nlohmann::json::parse(lines[0]).at("_header");
    CHECK(h["artifact"] == name);
    CHECK(h["seed"] == 7);
    CHECK(h["config_digest"] == "digest");
  }
  CHECK(corpus::load_labeled_triples((dir / "train.jsonl").string()).records == w.train);
}

}  // TEST_SUITE
