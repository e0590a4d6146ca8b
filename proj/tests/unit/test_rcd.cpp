#include <cmath>
#include <deque>
#include <map>

#include "forge/rcd/rcd.hpp"
#include "unit/support.hpp"

using namespace forge;
using namespace forge::rcd;
using namespace std::chrono_literals;

namespace {

corpus::ItemDoc full_item() {
  return test::item("svc-1", {{"title", "City Clinic"},
                              {"keywords", "clinic,doctor"},
                              {"category", "healthcare"},
                              {"description", "walk-in doctor visits"}});
}

// Answers by prompt kind from a queue of scripted outcomes; "!t" throws a
// transient error, "!p" a permanent one. Falls back to a fixed reply.
class ScriptedTeacher final : public TeacherClient {
 public:
  std::map<int, std::deque<std::string>> script;
  std::size_t calls = 0;

  std::string complete(const std::string& prompt) override {
    ++calls;
    const int kind = prompt.find("Reason") != std::string::npos  ? 2
                     : prompt.find("Query") != std::string::npos ? 1
                                                                 : 0;
    auto& q = script[kind];
    std::string reply = q.empty() ? defaults[kind] : q.front();
    if (!q.empty()) q.pop_front();
    if (reply == "!t") throw TeacherError(TeacherError::Kind::transient, "scripted timeout");
    if (reply == "!p") throw TeacherError(TeacherError::Kind::permanent, "scripted 400");
    return reply;
  }

  std::string defaults[3] = {"Summary: A walk-in clinic for doctor visits.\nBackground: Clinics treat minor illness.",
                             "Query 1: clinic doctor\nQuery 2: walk-in clinic\nQuery 3: clinic doctor",
                             "Reason 1: asks for a doctor\nReason 2: wants walk-in care\nReason 3: same"};
};

class StubEncoder final : public embed::TextEncoder {
 public:
  StubEncoder(std::string anchor, std::map<std::string, double> sims)
      : anchor_(std::move(anchor)), sims_(std::move(sims)) {}
  embed::Vector embed(std::string_view text) const override {
    if (text == anchor_) return {1.0, 0.0};
    auto it = sims_.find(std::string(text));
    const double s = it == sims_.end() ? 1.0 : it->second;
    return {s, std::sqrt(1.0 - s * s)};
  }
  std::size_t dimension() const override { return 2; }

 private:
  std::string anchor_;
  std::map<std::string, double> sims_;
};

struct SleepLog {
  std::vector<std::chrono::milliseconds> waits;
  Sleeper sleeper() {
    return [this](std::chrono::milliseconds ms) { waits.push_back(ms); };
  }
};

corpus::Catalog first_items(std::size_t n) {
  const auto all = corpus::load_item_catalog(test::fixture("icp_items.jsonl").string()).items;
  corpus::Catalog out;
  for (const auto& [id, doc] : all) {
    if (out.size() == n) break;
    out.emplace(id, doc);
  }
  return out;
}

}  // namespace

TEST_SUITE("rcd") {

TEST_CASE("prompts render every slot and match the frozen golden") {
  const RcdPromptSet p;
  const auto r = render_rcd_prompts(full_item(), p, {"clinic doctor", "walk-in clinic"});
  CHECK(r[0].find("Title: City Clinic\nKeywords: clinic,doctor\nCategory: healthcare") != std::string::npos);
  CHECK(r[1].find("Generate 3 diverse search queries") == 0);
  CHECK(r[2].find("Queries:\n1. clinic doctor\n2. walk-in clinic\n") != std::string::npos);
  for (const auto& s : r) CHECK(s.find('{') == std::string::npos);
  test::check_golden("rcd_prompts_city_clinic.txt", r[0] + "\n---\n" + r[1] + "\n---\n" + r[2] + "\n");
}

TEST_CASE("missing optional fields render empty and are counted") {
  RenderCounters counters;
  const auto r = render_rcd_prompts(test::item("x", {{"title", "Taxi"}}), {}, {}, &counters);
  CHECK(r[0].find("Keywords: \n") != std::string::npos);
  CHECK(counters.missing_fields["keywords"] == 1);
  CHECK(counters.missing_fields["description"] == 1);
  CHECK_THROWS_AS(render_rcd_prompts(test::item("y", {{"keywords", "k"}}), {}), std::invalid_argument);
  RcdPromptSet bad;
  bad.prompt1 = "Hello {nope}";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("response parsers tolerate labels, numbering and continuation lines") {
  const auto s = parse_summary_response("summary: A clinic\nfor walk-ins.\nBACKGROUND: Clinics help.");
  CHECK(s.summary == "A clinic for walk-ins.");
  CHECK(s.background == "Clinics help.");
  CHECK(parse_queries_response("Query 1: a\n- Query 2: b\n\nquery 3: c") ==
        std::vector<std::string>{"a", "b", "c"});
  CHECK(parse_reasons_response("Reason 2: second\nReason 1: first", 3) ==
        std::vector<std::string>{"first", "second", ""});
  CHECK_THROWS_AS(parse_summary_response("nothing here"), ResponseParseError);
  CHECK_THROWS_AS(parse_queries_response("\x01<<garbled>>"), ResponseParseError);
}

TEST_CASE("generate returns parsed output from canned responses") {
  ScriptedTeacher t;
  SleepLog sleeps;
  const auto g = generate(t, full_item(), {}, {}, sleeps.sleeper());
  REQUIRE(g.output);
  CHECK(g.output->summary == "A walk-in clinic for doctor visits.");
  REQUIRE(g.output->queries.size() == 3);
  CHECK(g.output->queries[1] == GeneratedQuery{"walk-in clinic", "wants walk-in care"});
  CHECK(t.calls == 3);
  CHECK(sleeps.waits.empty());
}

TEST_CASE("transient failures are retried with exponential backoff") {
  ScriptedTeacher t;
  t.script[0] = {"!t", "!t"};
  SleepLog sleeps;
  const auto g = generate(t, full_item(), {}, {3, 1000ms}, sleeps.sleeper());
  REQUIRE(g.output);
  CHECK(g.attempts[0] == 3);
  CHECK(g.attempts[1] == 1);
  CHECK(sleeps.waits == std::vector<std::chrono::milliseconds>{1000ms, 2000ms});

  ScriptedTeacher down;
  down.script[1] = {"!t", "!t", "!t", "!t"};
  const auto e = generate(down, full_item(), {}, {3, 10ms}, sleeps.sleeper());
  CHECK_FALSE(e.output);
  CHECK(e.reason == "retries_exhausted");
  CHECK(e.attempts[1] == 4);

  ScriptedTeacher denied;
  denied.script[0] = {"!p"};
  const auto p = generate(denied, full_item(), {}, {}, sleeps.sleeper());
  CHECK(p.reason == "teacher_error");
  CHECK(p.attempts[0] == 1);
}

TEST_CASE("malformed payloads fail without retry and keep the raw text") {
  ScriptedTeacher t;
  t.script[1] = {"\x01<<garbled>>"};
  const auto g = generate(t, full_item(), {}, {}, {});
  CHECK_FALSE(g.output);
  CHECK(g.reason == "malformed_response");
  CHECK(g.raw == "\x01<<garbled>>");
  CHECK(t.calls == 2);

  const auto m = generate(t, test::item("x", {{"keywords", "k"}}), {}, {}, {});
  CHECK(m.reason == "missing_title");
}

TEST_CASE("validation drops duplicates, long and dissimilar queries") {
  const auto item = full_item();
  const std::string anchor = validation_text(item);
  CHECK(anchor == "City Clinic | clinic,doctor | walk-in doctor visits");
  const StubEncoder enc(anchor, {{"clinic doctor", 0.5}, {"pizza", 0.05}});
  RcdOutput out{"svc-1", "A walk-in clinic.", "bg",
                {{"clinic doctor", "r1"}, {" clinic  doctor ", "r2"}, {"pizza", "r3"},
                 {std::string(70, 'x'), "r4"}, {"  ", "r5"}}};
  const auto v = validate_rcd_output(out, item, enc, {});
  REQUIRE(v.output);
  REQUIRE(v.output->queries.size() == 1);
  CHECK(v.output->queries[0] == GeneratedQuery{"clinic doctor", "r1"});
  CHECK(v.dropped_duplicate == 1);
  CHECK(v.dropped_similarity == 1);
  CHECK(v.dropped_length == 1);
  CHECK(v.dropped_empty == 1);

  out.summary = "Too short";
  CHECK(validate_rcd_output(out, item, enc, {}).reason == "summary_too_short");
  out.summary = "A walk-in clinic.";
  out.queries = {{"pizza", ""}};
  CHECK(validate_rcd_output(out, item, enc, {}).reason == "no_valid_queries");
}

TEST_CASE("emit produces one summary and one query document") {
  const RcdOutput out{"svc-1", "A clinic.", "Clinics help.", {{"clinic doctor", "needs a doctor"}, {"walk-in", ""}}};
  const auto docs = emit_rcd_examples(out, full_item());
  REQUIRE(docs.size() == 2);
  CHECK(docs[0] == RcdInstance{"svc-1", "summary", "Summary: A clinic.\nBackground: Clinics help."});
  CHECK(docs[1].text ==
        "Service: City Clinic | clinic,doctor\nQuery: clinic doctor Reason: needs a doctor\nQuery: walk-in");
  for (const auto& d : docs) CHECK(rcd_instance_from_json(nlohmann::json::parse(to_json(d).dump())) == d);
}

TEST_CASE("a 10-item run writes two documents per accepted item") {
  const auto cat = first_items(10);
  REQUIRE(cat.size() == 10);
  const embed::HashedNgramEncoder enc({});
  for (double rate : {0.0, 0.2}) {
    MockTeacher t({7, rate});
    RcdConfig cfg;
    cfg.retry.max_retries = 2;
    const auto r = run_rcd(cat, t, enc, cfg, {});
    CHECK(r.instances.size() == 2 * r.stats.accepted);
    CHECK(r.stats.accepted + r.failures.size() == 10);
    if (rate == 0.0) CHECK(r.stats.accepted == 10);
    const auto report = failure_report(r);
    CHECK(report.dump().find("\"failures\"") != std::string::npos);
  }
}

TEST_CASE("cached responses make a rerun identical with zero teacher calls") {
  const auto cat = first_items(6);
  const embed::HashedNgramEncoder enc({});
  test::TempDir dir("rcdcache");
  const RcdCache cache(dir.path());
  MockTeacher first;
  const auto a = run_rcd(cat, first, enc, {}, {}, &cache);
  CHECK(first.calls() == 18);
  MockTeacher second;
  const auto b = run_rcd(cat, second, enc, {}, {}, &cache);
  CHECK(second.calls() == 0);
  CHECK(b.stats.cache_hits == 6);
  CHECK(a.instances == b.instances);

  RcdConfig other;
  other.prompts.num_queries = 2;
  MockTeacher third;
  run_rcd(cat, third, enc, other, {}, &cache);
  CHECK(third.calls() == 18);  // different prompt digest misses the cache
}

TEST_CASE("mock teacher faults are deterministic") {
  const MockTeacher a({3, 0.5}), b({3, 0.5});
  std::size_t faults = 0;
  for (int i = 0; i < 200; ++i) {
    const std::string p = "prompt " + std::to_string(i);
    CHECK(a.fault(p, 0) == b.fault(p, 0));
    faults += a.fault(p, 0) != MockTeacher::Fault::none;
  }
  CHECK(faults > 60);
  CHECK(faults < 140);
  CHECK(MockTeacher({3, 0.0}).fault("x", 0) == MockTeacher::Fault::none);
}

}  // TEST_SUITE
