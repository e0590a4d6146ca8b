#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/dke/dke.hpp"
#include "forge/embed/embedder.hpp"
#include "forge/icp/icp.hpp"
#include "forge/metrics/metrics.hpp"
#include "forge/mlm/model.hpp"
#include "forge/mlm/relevance.hpp"
#include "forge/mlm/training.hpp"
#include "forge/rcd/rcd.hpp"
#include "forge/synth/world.hpp"

namespace forge::ablation {

struct Variant {
  std::string name;
  bool dke = false;
  bool icp = false;
  bool rcd = false;
};

/// baseline, +DKE, +ICP, +RCD, +DKE+ICP, +DKE+ICP+RCD.
std::vector<Variant> standard_variants();

struct AblationConfig {
  synth::WorldConfig world;
  embed::EmbedderConfig embedder;
  icp::ScreenConfig screen;
  mlm::ModelConfig model;
  mlm::RelevancePrompt prompt;
  dke::MaskConfig mask;
  std::size_t dke_top_k = 5;
  std::size_t pretrain_epochs = 20;  // mask draws per document
  mlm::PretrainConfig pretrain;
  mlm::SftConfig sft;
  std::size_t jobs = 1;
};

struct VariantResult {
  Variant variant;
  std::size_t pretrain_units = 0;
  metrics::EvalReport test;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<VariantResult> rows;
};

/// Generates the world for `seed`, builds ICP/RCD/DKE data once, then
/// pretrains and fine-tunes one model per variant and scores the test split.
SeedResult run_seed(const AblationConfig& cfg, std::uint64_t seed,
                    const std::vector<Variant>& variants = standard_variants());

struct OrderingCheck {
  bool baseline_floor = false;    // baseline AUC >= floor
  bool singles_above = false;     // each single method >= baseline
  bool full_margin = false;       // full >= baseline + margin
  bool ok() const { return baseline_floor && singles_above && full_margin; }
};

OrderingCheck check_ordering(const SeedResult& r, double floor = 0.80, double margin = 0.02);

nlohmann::ordered_json to_json(const SeedResult& r);
/// Fixed-width text table, one row per variant.
std::string format_table(const std::vector<SeedResult>& results);

}  // namespace forge::ablation
