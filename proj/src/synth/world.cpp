#include "forge/synth/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "forge/dke/vocab.hpp"
#include "forge/util/io.hpp"
#include "forge/util/rng.hpp"
#include "forge/util/text.hpp"

namespace forge::synth {

using corpus::ItemDoc;

namespace {
constexpr std::size_t kTitleTokens = 2;
constexpr std::size_t kKeywordTokens = 3;
constexpr std::size_t kDescriptionTokens = 5;
constexpr std::size_t kItemTokens = kTitleTokens + kKeywordTokens + kDescriptionTokens;

std::string pseudo_word(Rng& rng) {
  static constexpr std::string_view kOnset = "bdfgklmnprstvz";
  static constexpr std::string_view kVowel = "aeiou";
  const std::size_t syllables = 2 + rng.index(2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(kOnset[rng.index(kOnset.size())]);
    w.push_back(kVowel[rng.index(kVowel.size())]);
  }
  if (rng.bernoulli(0.3)) w.push_back('n');
  return w;
}

template <class T>
std::vector<T> sample_distinct(const std::vector<T>& pool, std::size_t k, Rng& rng) {
  std::vector<T> copy = pool;
  for (std::size_t i = 0; i < k; ++i) std::swap(copy[i], copy[i + rng.index(copy.size() - i)]);
  copy.resize(k);
  return copy;
}

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), s);
      cdf_[i] = total;
    }
    for (double& c : cdf_) c /= total;
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform01();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};
}  // namespace

void WorldConfig::validate() const {
  if (n_items == 0 || n_queries == 0 || n_clicks == 0 || n_categories == 0) {
    throw std::invalid_argument("world counts must be positive");
  }
  if (n_train == 0 || n_valid == 0 || n_test == 0) {
    throw std::invalid_argument("triple split sizes must be positive");
  }
  if (!(noise_rate >= 0.0 && noise_rate < 0.5)) {
    throw std::invalid_argument("noise_rate must be in [0, 0.5)");
  }
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw std::invalid_argument("positive_fraction must be in (0, 1)");
  }
  if (!(hard_negative_fraction >= 0.0 && hard_negative_fraction <= 1.0)) {
    throw std::invalid_argument("hard_negative_fraction must be in [0, 1]");
  }
  if (relevance_min_shared == 0 || relevance_min_shared > kTitleTokens + kKeywordTokens) {
    throw std::invalid_argument("relevance_min_shared must be in [1, 5]");
  }
  if (pool_size < kItemTokens) {
    throw std::invalid_argument("pool_size must be at least " + std::to_string(kItemTokens));
  }
  if (n_categories > n_items) throw std::invalid_argument("more categories than items");
  if (n_queries < 3) throw std::invalid_argument("need at least 3 queries for three splits");
}

WorldConfig preset(std::string_view name) {
  WorldConfig cfg;
  if (name == "small") return cfg;
  if (name == "tiny") {
    cfg.n_items = 40;
    cfg.n_queries = 200;
    cfg.n_clicks = 1500;
    cfg.n_categories = 4;
    cfg.pool_size = 30;
    cfg.n_train = 400;
    cfg.n_valid = 100;
    cfg.n_test = 200;
    return cfg;
  }
  throw std::invalid_argument("unknown world preset '" + std::string(name) +
                              "' (expected tiny or small)");
}

std::vector<std::string> content_tokens(const ItemDoc& item) {
  std::vector<std::string> out;
  for (const auto& [name, value] : item.fields) {
    if (name == "category") continue;
    for (auto& t : dke::tokenize(value)) {
      if (t.size() == 1 && !std::isalnum(static_cast<unsigned char>(t[0]))) continue;
      out.push_back(std::move(t));
    }
  }
  return out;
}

bool is_relevant(std::string_view query, const ItemDoc& item, std::size_t min_shared) {
  const auto item_tokens = content_tokens(item);
  const std::set<std::string> item_set(item_tokens.begin(), item_tokens.end());
  std::set<std::string> shared;
  for (auto& t : dke::tokenize(query)) {
    if (item_set.count(t)) shared.insert(std::move(t));
  }
  return shared.size() >= min_shared;
}

corpus::Catalog World::catalog() const {
  corpus::Catalog c;
  for (const auto& item : items) c.emplace(item.item_id, item);
  return c;
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  World world;

  // Globally unique pseudo-words: one name per category plus its content pool.
  std::unordered_set<std::string> used;
  auto fresh_word = [&] {
    for (;;) {
      std::string w = pseudo_word(rng);
      if (used.insert(w).second) return w;
    }
  };
  std::vector<std::string> category_names;
  std::vector<std::vector<std::string>> pools(cfg.n_categories);
  for (std::size_t c = 0; c < cfg.n_categories; ++c) {
    category_names.push_back(fresh_word());
    for (std::size_t t = 0; t < cfg.pool_size; ++t) pools[c].push_back(fresh_word());
  }

  std::vector<std::size_t> item_category(cfg.n_items);
  std::vector<std::vector<std::string>> item_tokens(cfg.n_items);
  std::vector<std::vector<std::size_t>> category_items(cfg.n_categories);
  const int width = static_cast<int>(std::to_string(cfg.n_items).size());
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const std::size_t c = i % cfg.n_categories;
    item_category[i] = c;
    category_items[c].push_back(i);
    auto toks = sample_distinct(pools[c], kItemTokens, rng);
    std::vector<std::string> title(toks.begin(), toks.begin() + kTitleTokens);
    std::vector<std::string> keywords(toks.begin() + kTitleTokens,
                                      toks.begin() + kTitleTokens + kKeywordTokens);
    std::vector<std::string> desc(toks.begin() + kTitleTokens + kKeywordTokens, toks.end());
    std::string id = std::to_string(i);
    id = "app-" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    ItemDoc doc;
    doc.item_id = id;
    doc.fields = {{"title", join(title, " ")},
                  {"keywords", join(keywords, ",")},
                  {"category", category_names[c]},
                  {"description", join(desc, " ")}};
    world.items.push_back(std::move(doc));
    item_tokens[i] = std::move(toks);
  }

  // Queries: 2-4 tokens drawn from one source item's content tokens.
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> query_source;
  const std::size_t max_attempts = 50 * cfg.n_queries + 1000;
  for (std::size_t attempt = 0; world.queries.size() < cfg.n_queries; ++attempt) {
    if (attempt >= max_attempts) {
      throw std::invalid_argument("world config infeasible: token pools cannot supply " +
                                  std::to_string(cfg.n_queries) + " distinct queries");
    }
    const std::size_t src = rng.index(cfg.n_items);
    const double u = rng.uniform01();
    const std::size_t len = u < 0.45 ? 2 : (u < 0.85 ? 3 : 4);
    std::string q = join(sample_distinct(item_tokens[src], len, rng), " ");
    if (seen.insert(q).second) {
      world.queries.push_back(std::move(q));
      query_source.push_back(src);
    }
  }

  std::vector<std::vector<std::size_t>> relevant(cfg.n_queries);
  std::vector<std::vector<char>> is_rel(cfg.n_queries, std::vector<char>(cfg.n_items, 0));
  for (std::size_t q = 0; q < cfg.n_queries; ++q) {
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
      if (is_relevant(world.queries[q], world.items[i], cfg.relevance_min_shared)) {
        relevant[q].push_back(i);
        is_rel[q][i] = 1;
      }
    }
    if (relevant[q].size() == cfg.n_items) {
      throw std::invalid_argument("world config infeasible: a query is relevant to every item");
    }
  }
  auto irrelevant_item = [&](std::size_t q, const std::vector<std::size_t>* within) {
    for (int tries = 0; tries < 200; ++tries) {
      const std::size_t i = within ? (*within)[rng.index(within->size())] : rng.index(cfg.n_items);
      if (!is_rel[q][i]) return i;
    }
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
      if (!is_rel[q][i]) return i;
    }
    return std::size_t{0};
  };

  ZipfSampler zipf(cfg.n_queries, cfg.zipf_exponent);
  for (std::size_t n = 0; n < cfg.n_clicks; ++n) {
    const std::size_t q = zipf(rng);
    const std::size_t i = rng.bernoulli(cfg.noise_rate)
                              ? irrelevant_item(q, nullptr)
                              : relevant[q][rng.index(relevant[q].size())];
    world.clicks.push_back({world.queries[q], world.items[i].item_id,
                            static_cast<std::int64_t>(1 + rng.index(5))});
  }

  std::vector<std::size_t> order(cfg.n_queries);
  for (std::size_t q = 0; q < cfg.n_queries; ++q) order[q] = q;
  rng.shuffle(order.begin(), order.end());
  const std::size_t total = cfg.n_train + cfg.n_valid + cfg.n_test;
  const std::size_t n_train_q =
      std::max<std::size_t>(1, cfg.n_queries * cfg.n_train / total);
  const std::size_t n_valid_q =
      std::max<std::size_t>(1, cfg.n_queries * cfg.n_valid / total);
  if (n_train_q + n_valid_q >= cfg.n_queries) {
    throw std::invalid_argument("world config infeasible: too few queries for three splits");
  }
  auto make_split = [&](std::size_t begin, std::size_t end, std::size_t count) {
    std::vector<corpus::LabeledTriple> out;
    std::set<std::pair<std::size_t, std::size_t>> used_pairs;
    const std::size_t span = end - begin;
    for (std::size_t attempt = 0; out.size() < count && attempt < 20 * count;) {
      // Draw the label first and retry within it so deduplication cannot
      // skew the balance toward the larger pool.
      const bool positive = rng.bernoulli(cfg.positive_fraction);
      const bool hard = !positive && rng.bernoulli(cfg.hard_negative_fraction);
      for (int tries = 0; tries < 50; ++tries, ++attempt) {
        const std::size_t q = order[begin + rng.index(span)];
        std::size_t i;
        if (positive) {
          i = relevant[q][rng.index(relevant[q].size())];
        } else if (hard) {
          i = irrelevant_item(q, &category_items[item_category[query_source[q]]]);
        } else {
          i = irrelevant_item(q, nullptr);
        }
        if (!used_pairs.insert({q, i}).second) continue;
        out.push_back({world.queries[q], world.items[i].item_id, is_rel[q][i] ? 1 : 0});
        break;
      }
    }
    if (out.size() < count) {
      throw std::invalid_argument("world config infeasible: cannot draw " +
                                  std::to_string(count) + " distinct triples");
    }
    return out;
  };
  world.train = make_split(0, n_train_q, cfg.n_train);
  world.valid = make_split(n_train_q, n_train_q + n_valid_q, cfg.n_valid);
  world.test = make_split(n_train_q + n_valid_q, cfg.n_queries, cfg.n_test);
  return world;
}

void write_world(const World& world, const std::filesystem::path& dir,
                 const std::string& config_digest, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto emit = [&](const std::string& name, const auto& records) {
    std::string out = header_line({name, config_digest, seed, nlohmann::json::object()});
    for (const auto& r : records) {
      out += corpus::serialize(r);
      out += '\n';
    }
    write_file_atomic(dir / (name + ".jsonl"), out);
  };
  emit("items", world.items);
  emit("clicks", world.clicks);
  emit("train", world.train);
  emit("valid", world.valid);
  emit("test", world.test);
}

}  // namespace forge::synth
