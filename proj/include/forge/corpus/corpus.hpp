#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace forge::corpus {

/// Strips and collapses Unicode whitespace and applies NFC. No case folding.
std::string normalize_text(std::string_view raw);

struct ItemDoc {
  std::string item_id;
  /// Ordered (name, value) pairs; names unique, values normalized.
  std::vector<std::pair<std::string, std::string>> fields;

  std::optional<std::string_view> field(std::string_view name) const;
  bool operator==(const ItemDoc&) const = default;
};

/// Text used wherever an item is compared or shown to the relevance model:
/// title and keywords joined by " | " (the fields online scoring can afford).
/// Falls back to the first field value when neither is present.
std::string item_text(const ItemDoc& item);

struct ClickRecord {
  std::string query;
  std::string item_id;
  std::int64_t clicks = 0;
  bool operator==(const ClickRecord&) const = default;
};

struct LabeledTriple {
  std::string query;
  std::string item_id;
  int label = 0;
  bool operator==(const LabeledTriple&) const = default;
};

enum class Direction { q2i, i2q };
std::string_view to_string(Direction d);

struct Candidate {
  std::string id;
  std::int64_t clicks = 0;
  std::optional<double> similarity;
  bool operator==(const Candidate&) const = default;
};

/// An anchor (query or item_id) with its ordered counterparts. The ordering
/// key depends on the stage: clicks-descending after coarse screening,
/// similarity-ascending after data construction.
struct CandidateSet {
  std::string anchor;
  Direction direction = Direction::q2i;
  std::vector<Candidate> candidates;
  bool operator==(const CandidateSet&) const = default;
};

using Catalog = std::map<std::string, ItemDoc, std::less<>>;

/// Per-record failure; parsers catch these and keep going.
class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParseError {
  std::size_t line = 0;
  std::string message;
};

template <class T>
struct ParseResult {
  std::vector<T> records;
  std::vector<ParseError> errors;
  std::size_t lines = 0;  // non-blank, non-header lines seen
};

struct CatalogParseResult {
  Catalog items;
  std::vector<ParseError> errors;
  std::size_t lines = 0;
  std::size_t duplicates = 0;
};

ClickRecord parse_click_record(std::string_view line);
ItemDoc parse_item_record(std::string_view line);
LabeledTriple parse_labeled_triple(std::string_view line);

ParseResult<ClickRecord> parse_click_log(std::istream& in);
CatalogParseResult parse_item_catalog(std::istream& in);
ParseResult<LabeledTriple> parse_labeled_triples(std::istream& in);

std::string serialize(const ClickRecord& r);
std::string serialize(const ItemDoc& item);
std::string serialize(const LabeledTriple& t);

ParseResult<ClickRecord> load_click_log(const std::string& path);
CatalogParseResult load_item_catalog(const std::string& path);
ParseResult<LabeledTriple> load_labeled_triples(const std::string& path);

}  // namespace forge::corpus
