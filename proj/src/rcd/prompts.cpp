#include "forge/rcd/prompts.hpp"

#include <stdexcept>

#include "forge/util/digest.hpp"
#include "forge/util/text.hpp"

namespace forge::rcd {

namespace {
constexpr std::array<std::string_view, 4> kFieldSlots = {"title", "keywords", "category",
                                                         "description"};

void check_template(const std::string& tmpl, std::string_view name, bool allow_queries) {
  if (tmpl.empty()) throw std::invalid_argument(std::string(name) + " must not be empty");
  for (const auto& slot : template_slots(tmpl)) {
    bool ok = slot == "num_queries" || (allow_queries && slot == "queries");
    for (auto f : kFieldSlots) ok = ok || slot == f;
    if (!ok) {
      throw std::invalid_argument(std::string(name) + " has unknown slot {" + slot + "}");
    }
  }
}
}  // namespace

void RcdPromptSet::validate() const {
  check_template(prompt1, "prompt1", false);
  check_template(prompt2, "prompt2", false);
  check_template(prompt3, "prompt3", true);
  if (num_queries < 1 || num_queries > 20) {
    throw std::invalid_argument("num_queries must be in [1, 20]");
  }
}

std::string RcdPromptSet::digest() const {
  Sha256Builder h;
  for (const auto* p : {&prompt1, &prompt2, &prompt3}) {
    h.update(std::to_string(p->size()));
    h.update(":");
    h.update(*p);
  }
  h.update(std::to_string(num_queries));
  const auto d = h.finish();
  return to_hex(d);
}

std::string numbered_queries(const std::vector<std::string>& queries) {
  std::string out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + queries[i];
  }
  return out;
}

std::array<std::string, 3> render_rcd_prompts(const corpus::ItemDoc& item,
                                              const RcdPromptSet& prompts,
                                              const std::vector<std::string>& queries,
                                              RenderCounters* counters) {
  prompts.validate();
  if (!item.field("title")) {
    throw std::invalid_argument("item '" + item.item_id + "' has no title field");
  }
  std::map<std::string, std::string, std::less<>> slots;
  for (auto f : kFieldSlots) {
    auto v = item.field(f);
    if (!v && counters) ++counters->missing_fields[std::string(f)];
    slots.emplace(std::string(f), v ? std::string(*v) : std::string());
  }
  slots["num_queries"] = std::to_string(prompts.num_queries);
  slots["queries"] = numbered_queries(queries);
  return {render_template(prompts.prompt1, slots), render_template(prompts.prompt2, slots),
          render_template(prompts.prompt3, slots)};
}

}  // namespace forge::rcd
