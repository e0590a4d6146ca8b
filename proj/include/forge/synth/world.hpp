#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"

namespace forge::synth {

struct WorldConfig {
  std::size_t n_items = 300;
  std::size_t n_queries = 2000;
  std::size_t n_clicks = 20000;
  std::size_t n_categories = 10;
  std::size_t pool_size = 80;  // content tokens per category
  std::size_t relevance_min_shared = 2;
  double noise_rate = 0.1;
  std::size_t n_train = 5000;
  std::size_t n_valid = 1000;
  std::size_t n_test = 2000;
  double positive_fraction = 0.6;
  double hard_negative_fraction = 0.5;  // negatives drawn from the query's own category
  double zipf_exponent = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Named presets: "tiny" for tests, "small" for the ablation world.
WorldConfig preset(std::string_view name);

/// Tokens of every field except category.
std::vector<std::string> content_tokens(const corpus::ItemDoc& item);

/// Relevant iff query and item share at least min_shared distinct content tokens.
bool is_relevant(std::string_view query, const corpus::ItemDoc& item, std::size_t min_shared);

struct World {
  std::vector<corpus::ItemDoc> items;  // item_id order
  std::vector<std::string> queries;
  std::vector<corpus::ClickRecord> clicks;
  std::vector<corpus::LabeledTriple> train, valid, test;

  corpus::Catalog catalog() const;
};

/// Deterministic per seed. Throws std::invalid_argument when the config is
/// infeasible (e.g. more distinct queries requested than the pools support).
World generate_world(const WorldConfig& cfg);

/// Writes items.jsonl, clicks.jsonl, train.jsonl, valid.jsonl, test.jsonl,
/// each led by an artifact header carrying config_digest and seed.
void write_world(const World& world, const std::filesystem::path& dir,
                 const std::string& config_digest, std::uint64_t seed);

}  // namespace forge::synth
