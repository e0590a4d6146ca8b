#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Single-pass substitution of {name} slots. Substituted values are never
/// rescanned. Unknown slot names are left verbatim and reported.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string, std::less<>>& slots,
                            std::vector<std::string>* unknown = nullptr);

/// Names of all {name} slots in order of appearance (duplicates kept).
std::vector<std::string> template_slots(std::string_view tmpl);

std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace forge
