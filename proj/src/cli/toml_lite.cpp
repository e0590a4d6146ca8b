#include "forge/cli/toml_lite.hpp"

#include <cctype>
#include <charconv>

namespace forge::toml {

std::string_view Value::type_name() const {
  switch (v.index()) {
    case 0: return "bool";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "string";
    default: return "array";
  }
}

ParseError::ParseError(std::size_t line, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

namespace {

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;
  std::size_t line;

  bool done() const { return pos >= s.size(); }
  char peek() const { return done() ? '\0' : s[pos]; }
  void skip_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, msg); }
};

bool bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_key(Cursor& c) {
  std::string key;
  while (true) {
    c.skip_ws();
    const std::size_t start = c.pos;
    while (!c.done() && bare_key_char(c.peek())) ++c.pos;
    if (c.pos == start) c.fail("expected a key");
    key.append(c.s.substr(start, c.pos - start));
    c.skip_ws();
    if (c.peek() != '.') return key;
    ++c.pos;
    key.push_back('.');
  }
}

std::string parse_basic_string(Cursor& c) {
  ++c.pos;  // opening quote
  std::string out;
  while (true) {
    if (c.done()) c.fail("unterminated string");
    char ch = c.s[c.pos++];
    if (ch == '"') return out;
    if (ch != '\\') {
      out.push_back(ch);
      continue;
    }
    if (c.done()) c.fail("unterminated escape");
    switch (char e = c.s[c.pos++]) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      default: c.fail(std::string("unsupported escape \\") + e);
    }
  }
}

std::string parse_literal_string(Cursor& c) {
  ++c.pos;
  const std::size_t end = c.s.find('\'', c.pos);
  if (end == std::string_view::npos) c.fail("unterminated string");
  std::string out(c.s.substr(c.pos, end - c.pos));
  c.pos = end + 1;
  return out;
}

Value parse_value(Cursor& c);

Value parse_scalar_token(Cursor& c) {
  const std::size_t start = c.pos;
  while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '#' && c.peek() != ' ' &&
         c.peek() != '\t') {
    ++c.pos;
  }
  std::string tok(c.s.substr(start, c.pos - start));
  if (tok.empty()) c.fail("expected a value");
  if (tok == "true") return {true};
  if (tok == "false") return {false};
  std::string digits;
  for (char ch : tok) {
    if (ch != '_') digits.push_back(ch);
  }
  const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                        digits == "+inf" || digits == "-inf" || digits == "nan";
  const char* b = digits.data();
  const char* e = b + digits.size();
  if (!digits.empty() && digits[0] == '+') ++b;
  if (is_float) {
    double d = 0;
    auto [p, ec] = std::from_chars(b, e, d);
    if (ec == std::errc() && p == e) return {d};
  } else {
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(b, e, i);
    if (ec == std::errc() && p == e) return {i};
  }
  c.fail("invalid value '" + tok + "'");
}

Value parse_value(Cursor& c) {
  c.skip_ws();
  switch (c.peek()) {
    case '"': return {parse_basic_string(c)};
    case '\'': return {parse_literal_string(c)};
    case '[': {
      ++c.pos;
      Array arr;
      while (true) {
        c.skip_ws();
        if (c.peek() == ']') {
          ++c.pos;
          return {std::move(arr)};
        }
        Value v = parse_value(c);
        if (std::holds_alternative<Array>(v.v)) c.fail("nested arrays are not supported");
        arr.push_back(std::move(v));
        c.skip_ws();
        if (c.peek() == ',') {
          ++c.pos;
        } else if (c.peek() != ']') {
          c.fail("expected ',' or ']' in array");
        }
      }
    }
    default: return parse_scalar_token(c);
  }
}

void expect_line_end(Cursor& c) {
  c.skip_ws();
  if (!c.done() && c.peek() != '#') c.fail("unexpected text after value");
}

}  // namespace

std::map<std::string, Value> parse(std::string_view text) {
  std::map<std::string, Value> out;
  std::string table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(start, nl - start);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    ++line_no;
    start = nl + 1;

    Cursor c{raw, 0, line_no};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;
    if (c.peek() == '[') {
      ++c.pos;
      table = parse_key(c);
      if (c.peek() != ']') c.fail("expected ']' after table name");
      ++c.pos;
      expect_line_end(c);
      continue;
    }
    std::string key = parse_key(c);
    if (c.peek() != '=') c.fail("expected '=' after key '" + key + "'");
    ++c.pos;
    Value v = parse_value(c);
    expect_line_end(c);
    if (!table.empty()) key = table + "." + key;
    if (!out.emplace(key, std::move(v)).second) c.fail("duplicate key '" + key + "'");
  }
  return out;
}

}  // namespace forge::toml
