#include "forge/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <variant>

#include "forge/cli/toml_lite.hpp"
#include "forge/util/digest.hpp"
#include "forge/util/io.hpp"
#include "forge/util/text.hpp"

namespace forge::cli {

std::string_view to_string(FieldType t) {
  switch (t) {
    case FieldType::integer: return "non-negative integer";
    case FieldType::floating: return "float";
    case FieldType::string: return "string";
    case FieldType::boolean: return "boolean";
    case FieldType::integer_list: return "list of non-negative integers";
  }
  return "?";
}

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "integer settings share one type");
using Member = std::variant<std::string RunConfig::*, std::uint64_t RunConfig::*,
                            double RunConfig::*, std::vector<std::uint64_t> RunConfig::*>;

struct Binding {
  FieldInfo info;
  Member member;
};

template <class T>
Binding bind(const char* name, T RunConfig::*m, bool is_path = false) {
  FieldType type;
  if constexpr (std::is_same_v<T, std::string>) {
    type = FieldType::string;
  } else if constexpr (std::is_same_v<T, double>) {
    type = FieldType::floating;
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    type = FieldType::integer_list;
  } else {
    type = FieldType::integer;
  }
  return {{name, type, is_path}, Member(m)};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      bind("items", &RunConfig::items, true),
      bind("clicks", &RunConfig::clicks, true),
      bind("triples", &RunConfig::triples, true),
      bind("dke", &RunConfig::dke, true),
      bind("icp", &RunConfig::icp, true),
      bind("rcd", &RunConfig::rcd, true),
      bind("vocab", &RunConfig::vocab, true),
      bind("model", &RunConfig::model, true),
      bind("online", &RunConfig::online, true),
      bind("pairs", &RunConfig::pairs, true),
      bind("snapshot", &RunConfig::snapshot, true),
      bind("out", &RunConfig::out, true),
      bind("out_dir", &RunConfig::out_dir, true),
      bind("report", &RunConfig::report, true),
      bind("run_log", &RunConfig::run_log, true),
      bind("rcd_cache", &RunConfig::rcd_cache, true),
      bind("failure_report", &RunConfig::failure_report, true),
      bind("seed", &RunConfig::seed),
      bind("jobs", &RunConfig::jobs, true),
      bind("world", &RunConfig::world),
      bind("n_items", &RunConfig::n_items),
      bind("n_queries", &RunConfig::n_queries),
      bind("n_clicks", &RunConfig::n_clicks),
      bind("n_categories", &RunConfig::n_categories),
      bind("n_train", &RunConfig::n_train),
      bind("n_valid", &RunConfig::n_valid),
      bind("n_test", &RunConfig::n_test),
      bind("sigma", &RunConfig::sigma),
      bind("max_candidates", &RunConfig::max_candidates),
      bind("min_candidates", &RunConfig::min_candidates),
      bind("embed_dim", &RunConfig::embed_dim),
      bind("ngram_min", &RunConfig::ngram_min),
      bind("ngram_max", &RunConfig::ngram_max),
      bind("icp_q2i_template", &RunConfig::icp_q2i_template),
      bind("icp_i2q_template", &RunConfig::icp_i2q_template),
      bind("k", &RunConfig::k),
      bind("max_length", &RunConfig::max_length),
      bind("mask_rate", &RunConfig::mask_rate),
      bind("mask_epochs", &RunConfig::mask_epochs),
      bind("dim", &RunConfig::dim),
      bind("activation", &RunConfig::activation),
      bind("init_scale", &RunConfig::init_scale),
      bind("alpha", &RunConfig::alpha),
      bind("steps", &RunConfig::steps),
      bind("epochs", &RunConfig::epochs),
      bind("batch_size", &RunConfig::batch_size),
      bind("optimizer", &RunConfig::optimizer),
      bind("lr", &RunConfig::lr),
      bind("sft_epochs", &RunConfig::sft_epochs),
      bind("sft_lr", &RunConfig::sft_lr),
      bind("sft_batch_size", &RunConfig::sft_batch_size),
      bind("prompt_template", &RunConfig::prompt_template),
      bind("verbalizer_negative", &RunConfig::verbalizer_negative),
      bind("verbalizer_positive", &RunConfig::verbalizer_positive),
      bind("bucket_edges", &RunConfig::bucket_edges),
      bind("teacher", &RunConfig::teacher),
      bind("teacher_failure_rate", &RunConfig::teacher_failure_rate),
      bind("sigma_rcd", &RunConfig::sigma_rcd),
      bind("num_queries", &RunConfig::num_queries),
      bind("max_retries", &RunConfig::max_retries),
      bind("backoff_ms", &RunConfig::backoff_ms),
      bind("teacher_timeout_ms", &RunConfig::teacher_timeout_ms),
      bind("rcd_parallelism", &RunConfig::rcd_parallelism, true),
      bind("max_pairs", &RunConfig::max_pairs),
      bind("created_at", &RunConfig::created_at, true),
      bind("listen", &RunConfig::listen, true),
      bind("admin", &RunConfig::admin, true),
      bind("seeds", &RunConfig::seeds),
      bind("ablate_mask_epochs", &RunConfig::ablate_mask_epochs),
  };
  return b;
}

const Binding* find_binding(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.info.name == key) return &b;
  }
  return nullptr;
}

const Binding& require_binding(std::string_view key, std::string_view source) {
  if (const Binding* b = find_binding(key)) return *b;
  throw ConfigError(std::string(source) + ": unknown config key '" + std::string(key) +
                    "'; did you mean '" + nearest_key(key) + "'?");
}

[[noreturn]] void type_error(const Binding& b, std::string_view source, std::string_view got) {
  throw ConfigError(std::string(source) + ": config key '" + b.info.name + "' expects " +
                    std::string(to_string(b.info.type)) + ", got " + std::string(got));
}

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

void apply_value(RunConfig& cfg, const Binding& b, const toml::Value& v, std::string_view source) {
  std::visit(
      [&](auto m) {
        using T = std::remove_reference_t<decltype(cfg.*m)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (auto* s = std::get_if<std::string>(&v.v)) {
            cfg.*m = *s;
            return;
          }
        } else if constexpr (std::is_same_v<T, double>) {
          if (auto* d = std::get_if<double>(&v.v)) {
            cfg.*m = *d;
            return;
          }
          if (auto* i = std::get_if<std::int64_t>(&v.v)) {
            cfg.*m = static_cast<double>(*i);
            return;
          }
        } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
          if (auto* arr = std::get_if<toml::Array>(&v.v)) {
            std::vector<std::uint64_t> out;
            for (const auto& e : *arr) {
              auto* i = std::get_if<std::int64_t>(&e.v);
              if (!i || *i < 0) type_error(b, source, "array containing " + std::string(e.type_name()));
              out.push_back(static_cast<std::uint64_t>(*i));
            }
            cfg.*m = std::move(out);
            return;
          }
        } else {
          if (auto* i = std::get_if<std::int64_t>(&v.v)) {
            if (*i < 0) type_error(b, source, "negative integer");
            cfg.*m = static_cast<T>(*i);
            return;
          }
        }
        type_error(b, source, std::string(v.type_name()));
      },
      b.member);
}

}  // namespace

const std::vector<FieldInfo>& config_fields() {
  static const std::vector<FieldInfo> fields = [] {
    std::vector<FieldInfo> out;
    for (const auto& b : bindings()) out.push_back(b.info);
    return out;
  }();
  return fields;
}

const FieldInfo* find_field(std::string_view key) {
  const Binding* b = find_binding(key);
  return b ? &b->info : nullptr;
}

std::string nearest_key(std::string_view key) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& b : bindings()) {
    const std::size_t d = levenshtein(key, b.info.name);
    if (d < best_d) {
      best_d = d;
      best = b.info.name;
    }
  }
  return best;
}

std::string flag_name(std::string_view key) {
  std::string out = "--";
  for (char c : key) out.push_back(c == '_' ? '-' : c);
  return out;
}

std::string env_name(std::string_view key) {
  std::string out = "FORGE_";
  for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

void set_from_string(RunConfig& cfg, std::string_view key, std::string_view value,
                     std::string_view source) {
  const Binding& b = require_binding(key, source);
  const std::string text = trim(value);
  toml::Value v;
  switch (b.info.type) {
    case FieldType::string:
      v.v = std::string(value);
      break;
    case FieldType::integer:
      if (auto u = parse_uint(text)) {
        v.v = static_cast<std::int64_t>(*u);
      } else {
        type_error(b, source, "'" + std::string(value) + "'");
      }
      break;
    case FieldType::floating:
      if (auto d = parse_double(text)) {
        v.v = *d;
      } else {
        type_error(b, source, "'" + std::string(value) + "'");
      }
      break;
    case FieldType::boolean:
      if (text == "true" || text == "1") {
        v.v = true;
      } else if (text == "false" || text == "0") {
        v.v = false;
      } else {
        type_error(b, source, "'" + std::string(value) + "'");
      }
      break;
    case FieldType::integer_list: {
      toml::Array arr;
      std::string_view rest = text;
      if (!rest.empty() && rest.front() == '[' && rest.back() == ']') rest = rest.substr(1, rest.size() - 2);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string part = trim(rest.substr(0, comma));
        auto u = parse_uint(part);
        if (!u) type_error(b, source, "'" + std::string(value) + "'");
        arr.push_back({static_cast<std::int64_t>(*u)});
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      v.v = std::move(arr);
      break;
    }
  }
  apply_value(cfg, b, v, source);
}

void apply_toml(RunConfig& cfg, std::string_view text, std::string_view source) {
  std::map<std::string, toml::Value> doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::ParseError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  for (const auto& [key, value] : doc) {
    std::string_view name = key;
    if (!find_binding(name)) {
      const auto dot = name.rfind('.');
      if (dot != std::string_view::npos) name = name.substr(dot + 1);
    }
    apply_value(cfg, require_binding(name, source), value, source);
  }
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

RunConfig load_config(const std::filesystem::path& file,
                      const std::map<std::string, std::string>& flags, const EnvLookup& env) {
  RunConfig cfg;
  if (!file.empty()) {
    require_file(file, "config file");
    apply_toml(cfg, read_file(file), file.string());
  }
  if (env) {
    for (const auto& b : bindings()) {
      const std::string name = env_name(b.info.name);
      if (auto v = env(name)) set_from_string(cfg, b.info.name, *v, name);
    }
  }
  for (const auto& [key, value] : flags) set_from_string(cfg, key, value, flag_name(key));
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& b : bindings()) {
    std::visit([&](auto m) { j[b.info.name] = cfg.*m; }, b.member);
  }
  return j;
}

std::string config_digest(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& b : bindings()) {
    if (b.info.is_path) continue;
    std::visit([&](auto m) { j[b.info.name] = cfg.*m; }, b.member);
  }
  return sha256_hex(j.dump());
}

}  // namespace forge::cli
