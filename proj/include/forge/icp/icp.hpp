#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/embed/embedder.hpp"

namespace forge::icp {

using corpus::CandidateSet;
using corpus::Catalog;
using corpus::ClickRecord;
using corpus::Direction;

struct Mappings {
  std::map<std::string, CandidateSet, std::less<>> q2i;
  std::map<std::string, CandidateSet, std::less<>> i2q;
};

/// Coarse screening. Rows for the same (query, item) are summed; pairs whose
/// total is zero never enter either map. Candidates are ordered by clicks
/// descending, ties by candidate id ascending.
Mappings build_mappings(std::span<const ClickRecord> clicks);

struct ScreenConfig {
  double sigma = 0.35;
  std::size_t max_candidates = 10;
  std::size_t min_candidates = 2;

  void validate() const;
};

struct ScreenStats {
  std::size_t unresolved = 0;  // candidate items missing from the catalog
  std::size_t filtered = 0;    // dropped by the similarity threshold
  std::size_t capped = 0;      // dropped by max_candidates
};

/// Text a candidate is compared and rendered with: item_text() for items,
/// the query itself for queries. Empty optional if the item is unknown.
std::optional<std::string> candidate_text(const CandidateSet& set, const corpus::Candidate& c,
                                          const Catalog& catalog);

/// Fine screening: keeps candidates whose cosine similarity to the anchor is
/// at least sigma, records it on each survivor, and caps the survivors at
/// max_candidates (highest similarity wins, ties by id). Survivors keep their
/// incoming relative order.
CandidateSet fine_screen(std::string_view anchor_text, const CandidateSet& cands,
                         const Catalog& catalog, const embed::TextEncoder& encoder,
                         const ScreenConfig& cfg, ScreenStats* stats = nullptr);

/// Sorts by recorded similarity ascending, ties by id. Throws
/// std::invalid_argument if any candidate lacks a similarity.
CandidateSet order_ascending(CandidateSet cands);

struct IcpTemplate {
  std::string q2i = "Query: {anchor}\nRelated services:\n{exemplars}";
  std::string i2q = "Service: {anchor}\nRelated queries:\n{exemplars}";
  std::string exemplar_line = "{index}. {exemplar}";
};

struct IcpInstance {
  Direction direction = Direction::q2i;
  std::string anchor;       // query string or item_id
  std::string anchor_text;  // rendered anchor
  std::vector<std::string> exemplar_ids;
  std::vector<std::string> exemplar_texts;
  std::vector<double> similarities;
  std::string text;

  bool operator==(const IcpInstance&) const = default;
};

/// Renders one instance from an ascending-ordered set. Returns nullopt (and
/// bumps *skipped) when fewer than cfg.min_candidates survived.
std::optional<IcpInstance> render_icp_instance(std::string_view anchor_text,
                                               const CandidateSet& ordered,
                                               const Catalog& catalog, const IcpTemplate& tmpl,
                                               const ScreenConfig& cfg,
                                               std::size_t* skipped = nullptr);

struct IcpStats {
  std::size_t q2i_anchors = 0;
  std::size_t i2q_anchors = 0;
  std::size_t skipped = 0;
  std::size_t missing_anchor_items = 0;
  ScreenStats screen;
};

struct IcpResult {
  std::vector<IcpInstance> instances;  // sorted by (direction, anchor)
  IcpStats stats;
};

/// Mappings, screening, ordering and rendering for every anchor of both
/// directions.
IcpResult build_icp_instances(std::span<const ClickRecord> clicks, const Catalog& catalog,
                              const embed::TextEncoder& encoder, const ScreenConfig& cfg,
                              const IcpTemplate& tmpl = {}, std::size_t jobs = 1);

nlohmann::ordered_json to_json(const IcpInstance& inst);
IcpInstance icp_instance_from_json(const nlohmann::json& j);

}  // namespace forge::icp
