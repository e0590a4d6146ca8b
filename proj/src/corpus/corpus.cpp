#include "forge/corpus/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include "forge/util/io.hpp"
#include "forge/util/unicode.hpp"

namespace forge::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

std::string normalize_text(std::string_view raw) {
  const std::u32string cps = unicode::decode(unicode::to_nfc(raw));
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (unicode::is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    unicode::append_utf8(out, cp);
  }
  return out;
}

std::optional<std::string_view> ItemDoc::field(std::string_view name) const {
  for (const auto& [k, v] : fields) {
    if (k == name) return std::string_view(v);
  }
  return std::nullopt;
}

std::string item_text(const ItemDoc& item) {
  auto title = item.field("title");
  auto keywords = item.field("keywords");
  if (title && keywords && !keywords->empty()) {
    return std::string(*title) + " | " + std::string(*keywords);
  }
  if (title) return std::string(*title);
  if (keywords) return std::string(*keywords);
  return item.fields.empty() ? std::string() : item.fields.front().second;
}

std::string_view to_string(Direction d) { return d == Direction::q2i ? "Q2I" : "I2Q"; }

namespace {

template <class J>
J parse_object(std::string_view line) {
  J j = J::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw RecordError("malformed JSON");
  if (!j.is_object()) throw RecordError("record is not a JSON object");
  return j;
}

template <class J>
std::string required_string(const J& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw RecordError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw RecordError(std::string("field '") + key + "' must be a string");
  return it->template get<std::string>();
}

template <class T, class LineParser>
ParseResult<T> parse_stream(std::istream& in, LineParser parse_line) {
  ParseResult<T> result;
  for_each_record_line(in, [&](std::size_t number, std::string_view line) {
    ++result.lines;
    try {
      result.records.push_back(parse_line(line));
    } catch (const RecordError& e) {
      result.errors.push_back({number, e.what()});
    }
  });
  return result;
}

}  // namespace

ClickRecord parse_click_record(std::string_view line) {
  const json j = parse_object<json>(line);
  ClickRecord r;
  r.query = normalize_text(required_string(j, "query"));
  if (r.query.empty()) throw RecordError("query is empty after normalization");
  r.item_id = required_string(j, "item_id");
  if (r.item_id.empty()) throw RecordError("item_id is empty");
  auto it = j.find("clicks");
  if (it == j.end()) throw RecordError("missing field 'clicks'");
  if (!it->is_number_integer()) throw RecordError("field 'clicks' must be an integer");
  if (it->is_number_unsigned()) {
    r.clicks = static_cast<std::int64_t>(it->get<std::uint64_t>());
  } else {
    r.clicks = it->get<std::int64_t>();
  }
  if (r.clicks < 0) throw RecordError("clicks must be non-negative");
  return r;
}

ItemDoc parse_item_record(std::string_view line) {
  const ordered_json j = parse_object<ordered_json>(line);
  ItemDoc item;
  item.item_id = required_string(j, "item_id");
  if (item.item_id.empty()) throw RecordError("item_id is empty");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "item_id") continue;
    if (!it.value().is_string()) throw RecordError("field '" + it.key() + "' must be a string");
    item.fields.emplace_back(it.key(), normalize_text(it.value().get<std::string>()));
  }
  if (item.fields.empty()) throw RecordError("item has no fields");
  return item;
}

LabeledTriple parse_labeled_triple(std::string_view line) {
  const json j = parse_object<json>(line);
  LabeledTriple t;
  t.query = normalize_text(required_string(j, "query"));
  if (t.query.empty()) throw RecordError("query is empty after normalization");
  t.item_id = required_string(j, "item_id");
  if (t.item_id.empty()) throw RecordError("item_id is empty");
  auto it = j.find("label");
  if (it == j.end()) throw RecordError("missing field 'label'");
  const json& label = *it;
  if (label.is_number_integer() && (label == 0 || label == 1)) {
    t.label = label.get<int>();
  } else if (label.is_string() && (label == "0" || label == "1")) {
    t.label = label.get<std::string>() == "1" ? 1 : 0;
  } else {
    throw RecordError("label must be 0 or 1, got " + label.dump());
  }
  return t;
}

ParseResult<ClickRecord> parse_click_log(std::istream& in) {
  return parse_stream<ClickRecord>(in, parse_click_record);
}

ParseResult<LabeledTriple> parse_labeled_triples(std::istream& in) {
  return parse_stream<LabeledTriple>(in, parse_labeled_triple);
}

CatalogParseResult parse_item_catalog(std::istream& in) {
  CatalogParseResult result;
  for_each_record_line(in, [&](std::size_t number, std::string_view line) {
    ++result.lines;
    try {
      ItemDoc item = parse_item_record(line);
      auto [it, inserted] = result.items.try_emplace(item.item_id, item);
      if (!inserted) {
        ++result.duplicates;
        it->second = std::move(item);
      }
    } catch (const RecordError& e) {
      result.errors.push_back({number, e.what()});
    }
  });
  return result;
}

std::string serialize(const ClickRecord& r) {
  ordered_json j;
  j["query"] = r.query;
  j["item_id"] = r.item_id;
  j["clicks"] = r.clicks;
  return j.dump();
}

std::string serialize(const ItemDoc& item) {
  ordered_json j;
  j["item_id"] = item.item_id;
  for (const auto& [k, v] : item.fields) j[k] = v;
  return j.dump();
}

std::string serialize(const LabeledTriple& t) {
  ordered_json j;
  j["query"] = t.query;
  j["item_id"] = t.item_id;
  j["label"] = t.label;
  return j.dump();
}

namespace {
std::ifstream open_input(const std::string& path, std::string_view what) {
  require_file(path, what);
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open " + path);
  return in;
}
}  // namespace

ParseResult<ClickRecord> load_click_log(const std::string& path) {
  auto in = open_input(path, "click log");
  return parse_click_log(in);
}

CatalogParseResult load_item_catalog(const std::string& path) {
  auto in = open_input(path, "item catalog");
  return parse_item_catalog(in);
}

ParseResult<LabeledTriple> load_labeled_triples(const std::string& path) {
  auto in = open_input(path, "triples file");
  return parse_labeled_triples(in);
}

}  // namespace forge::corpus
