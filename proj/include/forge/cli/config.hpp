#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace forge::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every setting a subcommand can read. Paths left empty are "not given".
struct RunConfig {
  // inputs and outputs
  std::string items, clicks, triples, dke, icp, rcd, vocab, model, online, pairs, snapshot;
  std::string out, out_dir, report, run_log, rcd_cache, failure_report;

  std::uint64_t seed = 42;
  std::size_t jobs = 1;

  // synthetic world; zero counts keep the preset's value
  std::string world = "small";
  std::size_t n_items = 0, n_queries = 0, n_clicks = 0, n_categories = 0;
  std::size_t n_train = 0, n_valid = 0, n_test = 0;

  // icp
  double sigma = 0.35;
  std::size_t max_candidates = 10;
  std::size_t min_candidates = 2;
  std::size_t embed_dim = 768;
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 3;
  std::string icp_q2i_template = "Query: {anchor}\nRelated services:\n{exemplars}";
  std::string icp_i2q_template = "Service: {anchor}\nRelated queries:\n{exemplars}";

  // dke and masking
  std::size_t k = 5;
  std::size_t max_length = 512;
  double mask_rate = 0.15;
  std::size_t mask_epochs = 1;

  // model and pretraining
  std::size_t dim = 64;
  std::string activation = "quadratic";
  double init_scale = 0.1;
  double alpha = 0.7;
  std::size_t steps = 0;
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::string optimizer = "adam";
  double lr = 0.01;

  // fine-tuning and scoring
  std::size_t sft_epochs = 10;
  double sft_lr = 0.03;
  std::size_t sft_batch_size = 16;
  std::string prompt_template = "Is {Q} and {I} related? [MASK]";
  std::string verbalizer_negative = "no";
  std::string verbalizer_positive = "yes";
  std::vector<std::uint64_t> bucket_edges = {5, 10, 15};

  // rcd
  std::string teacher = "mock";
  double teacher_failure_rate = 0.0;
  double sigma_rcd = 0.2;
  std::size_t num_queries = 3;
  std::size_t max_retries = 3;
  std::size_t backoff_ms = 1000;
  std::size_t teacher_timeout_ms = 30000;
  std::size_t rcd_parallelism = 4;

  // serving
  std::size_t max_pairs = 0;  // snapshot from clicks: 0 keeps every clicked pair
  std::string created_at;  // empty: current UTC time
  std::string listen = "127.0.0.1:8080";
  std::string admin = "127.0.0.1:8080";

  // ablation
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t ablate_mask_epochs = 20;
};

enum class FieldType { integer, floating, string, boolean, integer_list };
std::string_view to_string(FieldType t);

struct FieldInfo {
  std::string name;
  FieldType type;
  bool is_path = false;  // paths and runtime knobs are left out of the digest
};

const std::vector<FieldInfo>& config_fields();
const FieldInfo* find_field(std::string_view key);
/// Closest valid key by edit distance.
std::string nearest_key(std::string_view key);

/// "max_candidates" -> "--max-candidates"; "FORGE_MAX_CANDIDATES".
std::string flag_name(std::string_view key);
std::string env_name(std::string_view key);

/// Sets one key from text (environment variables and flags).
void set_from_string(RunConfig& cfg, std::string_view key, std::string_view value,
                     std::string_view source);
/// Applies a TOML document; "[section] key" is accepted as plain "key".
void apply_toml(RunConfig& cfg, std::string_view text, std::string_view source);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// defaults < config file < FORGE_* environment < flags. `file` may be
/// empty; a named file that does not exist is a MissingInputError.
RunConfig load_config(const std::filesystem::path& file,
                      const std::map<std::string, std::string>& flags,
                      const EnvLookup& env = process_env());

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// SHA-256 over the non-path settings, so the same parameters give the same
/// digest wherever the files live.
std::string config_digest(const RunConfig& cfg);

}  // namespace forge::cli
