#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"

namespace forge::rcd {

/// Three teacher prompts. Slots: {title} {keywords} {category} {description}
/// {num_queries}; the third prompt also takes {queries}, the numbered list
/// parsed from the second response.
struct RcdPromptSet {
  std::string prompt1 =
      "Summarize and rephrase this service; then give background knowledge about it.\n"
      "Title: {title}\nKeywords: {keywords}\nCategory: {category}\nDescription: {description}\n"
      "Answer in two labeled sections, \"Summary:\" and \"Background:\".";
  std::string prompt2 =
      "Generate {num_queries} diverse search queries a user might issue to find this service.\n"
      "Title: {title}\nKeywords: {keywords}\nCategory: {category}\nDescription: {description}\n"
      "Answer with one line per query, formatted \"Query <n>: <text>\".";
  std::string prompt3 =
      "For each query, explain why it matches this service.\n"
      "Title: {title}\nKeywords: {keywords}\nCategory: {category}\nDescription: {description}\n"
      "Queries:\n{queries}\n"
      "Answer with one line per query, formatted \"Reason <n>: <text>\".";
  std::size_t num_queries = 3;

  /// Throws std::invalid_argument on an empty template or an unknown slot.
  void validate() const;
  /// SHA-256 hex over the templates and num_queries; keys the response cache.
  std::string digest() const;
};

struct RenderCounters {
  std::map<std::string, std::size_t, std::less<>> missing_fields;
};

/// Numbered list "1. q\n2. q" used for the {queries} slot.
std::string numbered_queries(const std::vector<std::string>& queries);

/// Renders the three prompts. Absent optional fields become "" and are
/// counted. Throws std::invalid_argument when the item has no title.
std::array<std::string, 3> render_rcd_prompts(const corpus::ItemDoc& item,
                                              const RcdPromptSet& prompts,
                                              const std::vector<std::string>& queries = {},
                                              RenderCounters* counters = nullptr);

}  // namespace forge::rcd
