#include "forge/util/text.hpp"

#include <algorithm>
#include <numeric>

namespace forge {

namespace {
bool is_slot_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Returns the slot name if tmpl[pos] opens a well-formed {name}, else empty.
std::string_view slot_at(std::string_view tmpl, std::size_t pos) {
  if (tmpl[pos] != '{') return {};
  std::size_t end = pos + 1;
  while (end < tmpl.size() && is_slot_char(tmpl[end])) ++end;
  if (end == pos + 1 || end >= tmpl.size() || tmpl[end] != '}') return {};
  return tmpl.substr(pos + 1, end - pos - 1);
}
}  // namespace

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string, std::less<>>& slots,
                            std::vector<std::string>* unknown) {
  std::string out;
  out.reserve(tmpl.size() + 64);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    std::string_view name = slot_at(tmpl, i);
    if (name.empty()) {
      out.push_back(tmpl[i++]);
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end()) {
      if (unknown) unknown->emplace_back(name);
      out.append(tmpl.substr(i, name.size() + 2));
    } else {
      out.append(it->second);
    }
    i += name.size() + 2;
  }
  return out;
}

std::vector<std::string> template_slots(std::string_view tmpl) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    std::string_view name = slot_at(tmpl, i);
    if (!name.empty()) {
      names.emplace_back(name);
      i += name.size() + 1;
    }
  }
  return names;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace forge
