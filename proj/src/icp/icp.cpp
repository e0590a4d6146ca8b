#include "forge/icp/icp.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

#include "forge/util/parallel.hpp"
#include "forge/util/text.hpp"

namespace forge::icp {

using corpus::Candidate;

Mappings build_mappings(std::span<const ClickRecord> clicks) {
  std::map<std::pair<std::string, std::string>, std::int64_t> totals;
  for (const auto& r : clicks) totals[{r.query, r.item_id}] += r.clicks;

  Mappings m;
  for (const auto& [key, total] : totals) {
    if (total <= 0) continue;
    const auto& [query, item] = key;
    auto& q = m.q2i[query];
    q.anchor = query;
    q.direction = Direction::q2i;
    q.candidates.push_back({item, total, std::nullopt});
    auto& i = m.i2q[item];
    i.anchor = item;
    i.direction = Direction::i2q;
    i.candidates.push_back({query, total, std::nullopt});
  }
  auto by_clicks = [](const Candidate& a, const Candidate& b) {
    return std::tie(b.clicks, a.id) < std::tie(a.clicks, b.id);
  };
  for (auto& [_, set] : m.q2i) std::sort(set.candidates.begin(), set.candidates.end(), by_clicks);
  for (auto& [_, set] : m.i2q) std::sort(set.candidates.begin(), set.candidates.end(), by_clicks);
  return m;
}

void ScreenConfig::validate() const {
  if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("sigma must lie in (0, 1)");
  if (min_candidates < 2) throw std::invalid_argument("min_candidates must be >= 2");
  if (max_candidates < min_candidates) {
    throw std::invalid_argument("max_candidates must be >= min_candidates");
  }
}

std::optional<std::string> candidate_text(const CandidateSet& set, const Candidate& c,
                                          const Catalog& catalog) {
  if (set.direction == Direction::i2q) return c.id;
  auto it = catalog.find(c.id);
  if (it == catalog.end()) return std::nullopt;
  return corpus::item_text(it->second);
}

CandidateSet fine_screen(std::string_view anchor_text, const CandidateSet& cands,
                         const Catalog& catalog, const embed::TextEncoder& encoder,
                         const ScreenConfig& cfg, ScreenStats* stats) {
  const embed::Vector anchor_vec = encoder.embed(anchor_text);
  CandidateSet out{cands.anchor, cands.direction, {}};
  for (const auto& c : cands.candidates) {
    auto text = candidate_text(cands, c, catalog);
    if (!text) {
      if (stats) ++stats->unresolved;
      continue;
    }
    const double sim = embed::cosine_sim(anchor_vec, encoder.embed(*text));
    if (sim < cfg.sigma) {
      if (stats) ++stats->filtered;
      continue;
    }
    Candidate kept = c;
    kept.similarity = sim;
    out.candidates.push_back(std::move(kept));
  }
  if (out.candidates.size() > cfg.max_candidates) {
    std::vector<std::size_t> idx(out.candidates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& ca = out.candidates[a];
      const auto& cb = out.candidates[b];
      if (*ca.similarity != *cb.similarity) return *ca.similarity > *cb.similarity;
      return ca.id < cb.id;
    });
    std::vector<bool> keep(idx.size(), false);
    for (std::size_t i = 0; i < cfg.max_candidates; ++i) keep[idx[i]] = true;
    std::vector<Candidate> capped;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (keep[i]) capped.push_back(std::move(out.candidates[i]));
    }
    if (stats) stats->capped += out.candidates.size() - capped.size();
    out.candidates = std::move(capped);
  }
  return out;
}

CandidateSet order_ascending(CandidateSet cands) {
  for (const auto& c : cands.candidates) {
    if (!c.similarity) {
      throw std::invalid_argument("order_ascending: candidate '" + c.id +
                                  "' has no similarity; run fine_screen first");
    }
  }
  std::stable_sort(cands.candidates.begin(), cands.candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (*a.similarity != *b.similarity) return *a.similarity < *b.similarity;
                     return a.id < b.id;
                   });
  return cands;
}

std::optional<IcpInstance> render_icp_instance(std::string_view anchor_text,
                                               const CandidateSet& ordered,
                                               const Catalog& catalog, const IcpTemplate& tmpl,
                                               const ScreenConfig& cfg, std::size_t* skipped) {
  if (ordered.candidates.size() < cfg.min_candidates) {
    if (skipped) ++*skipped;
    return std::nullopt;
  }
  IcpInstance inst;
  inst.direction = ordered.direction;
  inst.anchor = ordered.anchor;
  inst.anchor_text = std::string(anchor_text);
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < ordered.candidates.size(); ++i) {
    const auto& c = ordered.candidates[i];
    auto text = candidate_text(ordered, c, catalog);
    if (!text) throw std::invalid_argument("render_icp_instance: unknown item '" + c.id + "'");
    inst.exemplar_ids.push_back(c.id);
    inst.similarities.push_back(c.similarity.value_or(0.0));
    lines.push_back(render_template(tmpl.exemplar_line,
                                    {{"index", std::to_string(i + 1)}, {"exemplar", *text}}));
    inst.exemplar_texts.push_back(std::move(*text));
  }
  const std::string& frame = ordered.direction == Direction::q2i ? tmpl.q2i : tmpl.i2q;
  inst.text =
      render_template(frame, {{"anchor", inst.anchor_text}, {"exemplars", join(lines, "\n")}});
  return inst;
}

IcpResult build_icp_instances(std::span<const ClickRecord> clicks, const Catalog& catalog,
                              const embed::TextEncoder& encoder, const ScreenConfig& cfg,
                              const IcpTemplate& tmpl, std::size_t jobs) {
  cfg.validate();
  const Mappings m = build_mappings(clicks);

  struct Task {
    const CandidateSet* set;
    std::string anchor_text;
  };
  IcpResult result;
  std::vector<Task> tasks;
  for (const auto& [query, set] : m.q2i) tasks.push_back({&set, query});
  for (const auto& [item_id, set] : m.i2q) {
    auto it = catalog.find(item_id);
    if (it == catalog.end()) {
      ++result.stats.missing_anchor_items;
      continue;
    }
    tasks.push_back({&set, corpus::item_text(it->second)});
  }
  result.stats.q2i_anchors = m.q2i.size();
  result.stats.i2q_anchors = m.i2q.size();

  struct Slot {
    std::optional<IcpInstance> instance;
    ScreenStats screen;
    std::size_t skipped = 0;
  };
  std::vector<Slot> slots(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    auto& slot = slots[i];
    CandidateSet screened =
        fine_screen(tasks[i].anchor_text, *tasks[i].set, catalog, encoder, cfg, &slot.screen);
    slot.instance = render_icp_instance(tasks[i].anchor_text,
                                        order_ascending(std::move(screened)), catalog, tmpl, cfg,
                                        &slot.skipped);
  });
  // Task order is (Q2I by query, I2Q by item_id), both taken from sorted maps.
  for (auto& slot : slots) {
    result.stats.skipped += slot.skipped;
    result.stats.screen.unresolved += slot.screen.unresolved;
    result.stats.screen.filtered += slot.screen.filtered;
    result.stats.screen.capped += slot.screen.capped;
    if (slot.instance) result.instances.push_back(std::move(*slot.instance));
  }
  return result;
}

nlohmann::ordered_json to_json(const IcpInstance& inst) {
  nlohmann::ordered_json j;
  j["direction"] = corpus::to_string(inst.direction);
  j["anchor"] = inst.anchor;
  j["anchor_text"] = inst.anchor_text;
  j["exemplar_ids"] = inst.exemplar_ids;
  j["exemplar_texts"] = inst.exemplar_texts;
  j["similarities"] = inst.similarities;
  j["text"] = inst.text;
  return j;
}

IcpInstance icp_instance_from_json(const nlohmann::json& j) {
  IcpInstance inst;
  inst.direction =
      j.at("direction").get<std::string>() == "I2Q" ? Direction::i2q : Direction::q2i;
  inst.anchor = j.at("anchor").get<std::string>();
  inst.anchor_text = j.at("anchor_text").get<std::string>();
  inst.exemplar_ids = j.at("exemplar_ids").get<std::vector<std::string>>();
  inst.exemplar_texts = j.at("exemplar_texts").get<std::vector<std::string>>();
  inst.similarities = j.at("similarities").get<std::vector<double>>();
  inst.text = j.at("text").get<std::string>();
  return inst;
}

}  // namespace forge::icp
