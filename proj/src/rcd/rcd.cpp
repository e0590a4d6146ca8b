#include "forge/rcd/rcd.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "forge/util/digest.hpp"
#include "forge/util/io.hpp"
#include "forge/util/parallel.hpp"
#include "forge/util/unicode.hpp"

namespace forge::rcd {

namespace {
struct LabeledLine {
  std::string label;  // lower-case
  std::optional<std::size_t> number;
  std::string value;
};

std::string trim(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(trim(line));
  return out;
}

std::optional<LabeledLine> labeled(std::string_view line) {
  while (!line.empty() && (line.front() == '-' || line.front() == '*' || line.front() == '#' ||
                           line.front() == ' ')) {
    line.remove_prefix(1);
  }
  std::size_t i = 0;
  LabeledLine out;
  while (i < line.size() && std::isalpha(static_cast<unsigned char>(line[i]))) {
    out.label.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(line[i]))));
    ++i;
  }
  if (out.label.empty()) return std::nullopt;
  while (i < line.size() && line[i] == ' ') ++i;
  std::size_t digits = 0, num = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
    num = num * 10 + static_cast<std::size_t>(line[i] - '0');
    ++i;
    ++digits;
  }
  if (digits) out.number = num;
  while (i < line.size() && line[i] == '*') ++i;
  if (i >= line.size() || line[i] != ':') return std::nullopt;
  out.value = trim(line.substr(i + 1));
  return out;
}

/// "3. text" list items.
std::optional<std::string> numbered_item(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0 || i + 1 >= line.size() || (line[i] != '.' && line[i] != ')')) return std::nullopt;
  return trim(line.substr(i + 1));
}

std::string append_text(std::string acc, const std::string& more) {
  if (more.empty()) return acc;
  if (!acc.empty()) acc += ' ';
  return acc + more;
}
}  // namespace

SummaryResponse parse_summary_response(const std::string& text) {
  SummaryResponse r;
  std::string* current = nullptr;
  bool saw_summary = false;
  for (const auto& line : lines_of(text)) {
    if (line.empty()) continue;
    if (auto l = labeled(line); l && (l->label == "summary" || l->label == "background")) {
      current = l->label == "summary" ? &r.summary : &r.background;
      saw_summary = saw_summary || l->label == "summary";
      *current = append_text(*current, l->value);
    } else if (current) {
      *current = append_text(*current, line);
    }
  }
  r.summary = corpus::normalize_text(r.summary);
  r.background = corpus::normalize_text(r.background);
  if (!saw_summary) throw ResponseParseError("response has no Summary section", text);
  return r;
}

std::vector<std::string> parse_queries_response(const std::string& text) {
  std::vector<std::string> out;
  bool in_list = false;
  for (const auto& line : lines_of(text)) {
    if (line.empty()) continue;
    auto l = labeled(line);
    if (l && l->label == "query") {
      out.push_back(corpus::normalize_text(l->value));
    } else if (l && l->label == "queries") {
      in_list = true;
      if (!l->value.empty()) out.push_back(corpus::normalize_text(l->value));
    } else if (auto item = numbered_item(line); item && (in_list || !out.empty() || !l)) {
      out.push_back(corpus::normalize_text(*item));
    }
  }
  std::erase_if(out, [](const std::string& q) { return q.empty(); });
  if (out.empty()) throw ResponseParseError("response has no queries", text);
  return out;
}

std::vector<std::string> parse_reasons_response(const std::string& text, std::size_t n) {
  std::vector<std::string> out(n);
  std::size_t next = 0;
  bool any = false;
  for (const auto& line : lines_of(text)) {
    if (line.empty()) continue;
    auto l = labeled(line);
    std::optional<std::size_t> slot;
    std::string value;
    if (l && (l->label == "reason" || l->label == "why")) {
      value = l->value;
      if (l->number && *l->number >= 1 && *l->number <= n) slot = *l->number - 1;
    } else if (auto item = numbered_item(line)) {
      value = *item;
    } else {
      continue;
    }
    any = true;
    if (!slot) {
      while (next < n && !out[next].empty()) ++next;
      if (next < n) slot = next;
    }
    if (slot) out[*slot] = corpus::normalize_text(value);
  }
  if (!any) throw ResponseParseError("response has no reasons", text);
  return out;
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

RcdCache::RcdCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path RcdCache::file_for(std::string_view item_id, std::string_view digest) const {
  std::string key(item_id);
  key.push_back('\0');
  key.append(digest);
  return dir_ / (sha256_hex(key) + ".json");
}

std::optional<std::array<std::string, 3>> RcdCache::get(std::string_view item_id,
                                                        std::string_view digest) const {
  const auto path = file_for(item_id, digest);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(read_file(path));
    if (j.at("item_id") != item_id || j.at("prompts_digest") != digest) return std::nullopt;
    const auto& r = j.at("responses");
    return std::array<std::string, 3>{r.at(0).get<std::string>(), r.at(1).get<std::string>(),
                                      r.at(2).get<std::string>()};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void RcdCache::put(std::string_view item_id, std::string_view digest,
                   const std::array<std::string, 3>& responses) const {
  nlohmann::ordered_json j;
  j["item_id"] = item_id;
  j["prompts_digest"] = digest;
  j["responses"] = responses;
  write_file_atomic(file_for(item_id, digest), j.dump());
}

namespace {
struct CallFailure {
  std::string reason;
  std::string detail;
};

std::variant<std::string, CallFailure> call_with_retries(TeacherClient& client,
                                                         const std::string& prompt,
                                                         const RetryPolicy& retry,
                                                         const Sleeper& sleep,
                                                         std::size_t& attempts) {
  for (std::size_t attempt = 0;; ++attempt) {
    ++attempts;
    try {
      return client.complete(prompt);
    } catch (const TeacherError& e) {
      if (e.kind() == TeacherError::Kind::malformed) return CallFailure{"malformed_response", e.what()};
      if (e.kind() == TeacherError::Kind::permanent) return CallFailure{"teacher_error", e.what()};
      if (attempt >= retry.max_retries) {
        return CallFailure{"retries_exhausted",
                           std::string(e.what()) + " after " + std::to_string(attempts) +
                               " attempts"};
      }
      if (sleep) sleep(retry.backoff * (std::int64_t{1} << std::min<std::size_t>(attempt, 20)));
    }
  }
}

RcdOutput assemble(const std::string& item_id, const std::array<std::string, 3>& responses) {
  RcdOutput out;
  out.item_id = item_id;
  auto s = parse_summary_response(responses[0]);
  out.summary = std::move(s.summary);
  out.background = std::move(s.background);
  auto queries = parse_queries_response(responses[1]);
  auto reasons = parse_reasons_response(responses[2], queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out.queries.push_back({std::move(queries[i]), std::move(reasons[i])});
  }
  return out;
}
}  // namespace

GenerateOutcome generate(TeacherClient& client, const corpus::ItemDoc& item,
                         const RcdPromptSet& prompts, const RetryPolicy& retry,
                         const Sleeper& sleep, const RcdCache* cache) {
  GenerateOutcome outcome;
  if (!item.field("title")) {
    outcome.reason = "missing_title";
    outcome.detail = "item has no title field";
    return outcome;
  }
  const std::string digest = prompts.digest();
  if (cache) {
    if (auto hit = cache->get(item.item_id, digest)) {
      try {
        outcome.output = assemble(item.item_id, *hit);
        outcome.from_cache = true;
        return outcome;
      } catch (const ResponseParseError&) {
        // Stale or hand-edited entry; fall through to the teacher.
      }
    }
  }

  std::array<std::string, 3> responses;
  auto fail = [&](CallFailure f) {
    outcome.reason = std::move(f.reason);
    outcome.detail = std::move(f.detail);
    return outcome;
  };
  auto rendered = render_rcd_prompts(item, prompts);
  for (std::size_t p = 0; p < 2; ++p) {
    auto r = call_with_retries(client, rendered[p], retry, sleep, outcome.attempts[p]);
    if (auto* f = std::get_if<CallFailure>(&r)) return fail(std::move(*f));
    responses[p] = std::move(std::get<std::string>(r));
  }
  std::vector<std::string> queries;
  try {
    parse_summary_response(responses[0]);
    queries = parse_queries_response(responses[1]);
  } catch (const ResponseParseError& e) {
    outcome.raw = e.raw();
    return fail({"malformed_response", e.what()});
  }
  rendered = render_rcd_prompts(item, prompts, queries);
  auto r = call_with_retries(client, rendered[2], retry, sleep, outcome.attempts[2]);
  if (auto* f = std::get_if<CallFailure>(&r)) return fail(std::move(*f));
  responses[2] = std::move(std::get<std::string>(r));
  try {
    outcome.output = assemble(item.item_id, responses);
  } catch (const ResponseParseError& e) {
    outcome.raw = e.raw();
    return fail({"malformed_response", e.what()});
  }
  if (cache) cache->put(item.item_id, digest, responses);
  return outcome;
}

std::string validation_text(const corpus::ItemDoc& item) {
  std::vector<std::string> parts;
  for (const auto& [name, value] : item.fields) {
    if (name != "category") parts.push_back(value);
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += " | ";
    out += parts[i];
  }
  return out;
}

ValidationOutcome validate_rcd_output(const RcdOutput& out, const corpus::ItemDoc& item,
                                      const embed::TextEncoder& encoder,
                                      const RcdValidateConfig& cfg) {
  ValidationOutcome v;
  if (unicode::codepoint_count(corpus::normalize_text(out.summary)) < cfg.min_summary_chars) {
    v.reason = "summary_too_short";
    return v;
  }
  const auto item_vec = encoder.embed(validation_text(item));
  RcdOutput kept = out;
  kept.summary = corpus::normalize_text(out.summary);
  kept.background = corpus::normalize_text(out.background);
  kept.queries.clear();
  std::set<std::string> seen;
  for (const auto& q : out.queries) {
    GeneratedQuery norm{corpus::normalize_text(q.text), corpus::normalize_text(q.reason)};
    if (norm.text.empty()) {
      ++v.dropped_empty;
    } else if (!seen.insert(norm.text).second) {
      ++v.dropped_duplicate;
    } else if (unicode::codepoint_count(norm.text) > cfg.max_query_chars) {
      ++v.dropped_length;
    } else if (embed::cosine_sim(encoder.embed(norm.text), item_vec) < cfg.sigma_rcd) {
      ++v.dropped_similarity;
    } else if (kept.queries.size() < cfg.max_queries) {
      kept.queries.push_back(std::move(norm));
    }
  }
  if (kept.queries.empty()) {
    v.reason = "no_valid_queries";
    return v;
  }
  v.output = std::move(kept);
  return v;
}

std::vector<RcdInstance> emit_rcd_examples(const RcdOutput& out, const corpus::ItemDoc& item) {
  std::string summary = "Summary: " + out.summary;
  if (!out.background.empty()) summary += "\nBackground: " + out.background;
  std::string queries = "Service: " + corpus::item_text(item);
  for (const auto& q : out.queries) {
    queries += "\nQuery: " + q.text;
    if (!q.reason.empty()) queries += " Reason: " + q.reason;
  }
  return {{out.item_id, "summary", std::move(summary)},
          {out.item_id, "queries", std::move(queries)}};
}

RcdRunResult run_rcd(const corpus::Catalog& catalog, TeacherClient& client,
                     const embed::TextEncoder& encoder, const RcdConfig& cfg,
                     const Sleeper& sleep, const RcdCache* cache) {
  cfg.prompts.validate();
  std::vector<const corpus::ItemDoc*> items;
  for (const auto& [id, doc] : catalog) items.push_back(&doc);

  struct Slot {
    std::vector<RcdInstance> instances;
    std::optional<RcdFailure> failure;
    bool cache_hit = false;
    std::size_t dropped = 0;
  };
  std::vector<Slot> slots(items.size());
  parallel_for(items.size(), std::max<std::size_t>(cfg.parallelism, 1), [&](std::size_t i) {
    const auto& item = *items[i];
    Slot& slot = slots[i];
    GenerateOutcome g = generate(client, item, cfg.prompts, cfg.retry, sleep, cache);
    slot.cache_hit = g.from_cache;
    if (!g.output) {
      std::string detail = g.detail;
      if (!g.raw.empty()) detail += "; payload: " + g.raw;
      slot.failure = RcdFailure{item.item_id, g.reason, detail};
      return;
    }
    ValidationOutcome v = validate_rcd_output(*g.output, item, encoder, cfg.validate);
    slot.dropped = v.dropped_duplicate + v.dropped_length + v.dropped_similarity + v.dropped_empty;
    if (!v.output) {
      slot.failure = RcdFailure{item.item_id, v.reason, "rejected by validation"};
      return;
    }
    slot.instances = emit_rcd_examples(*v.output, item);
  });

  RcdRunResult result;
  for (const auto* item : items) {
    if (item->field("title")) render_rcd_prompts(*item, cfg.prompts, {}, &result.counters);
  }
  result.stats.items = items.size();
  for (auto& slot : slots) {
    result.stats.cache_hits += slot.cache_hit;
    result.stats.dropped_queries += slot.dropped;
    if (slot.failure) {
      result.failures.push_back(std::move(*slot.failure));
    } else {
      ++result.stats.accepted;
      for (auto& inst : slot.instances) result.instances.push_back(std::move(inst));
    }
  }
  return result;
}

nlohmann::ordered_json to_json(const RcdInstance& inst) {
  nlohmann::ordered_json j;
  j["item_id"] = inst.item_id;
  j["kind"] = inst.kind;
  j["text"] = inst.text;
  return j;
}

RcdInstance rcd_instance_from_json(const nlohmann::json& j) {
  RcdInstance inst{j.at("item_id").get<std::string>(), j.at("kind").get<std::string>(),
                   j.at("text").get<std::string>()};
  if (inst.kind != "summary" && inst.kind != "queries") {
    throw std::invalid_argument("rcd instance kind must be summary or queries");
  }
  return inst;
}

nlohmann::ordered_json failure_report(const RcdRunResult& result) {
  nlohmann::ordered_json j;
  j["items"] = result.stats.items;
  j["accepted"] = result.stats.accepted;
  j["cache_hits"] = result.stats.cache_hits;
  j["dropped_queries"] = result.stats.dropped_queries;
  auto& missing = j["missing_fields"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : result.counters.missing_fields) missing[k] = v;
  auto& arr = j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : result.failures) {
    arr.push_back({{"item_id", f.item_id}, {"reason", f.reason}, {"detail", f.detail}});
  }
  return j;
}

}  // namespace forge::rcd
