#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forge::toml {

/// Subset of TOML: comments, [table] headers, bare or dotted keys, basic and
/// literal strings, integers, floats, booleans and single-line arrays of
/// scalars. Keys inside a table are reported as "table.key".
struct Value;
using Array = std::vector<Value>;
struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> v;

  std::string_view type_name() const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& msg);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Throws ParseError on malformed lines and duplicate keys.
std::map<std::string, Value> parse(std::string_view text);

}  // namespace forge::toml
