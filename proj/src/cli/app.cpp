#include "forge/cli/app.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "forge/cli/ablation.hpp"
#include "forge/cli/config.hpp"
#include "forge/cli/pipeline.hpp"
#include "forge/corpus/corpus.hpp"
#include "forge/dke/dke.hpp"
#include "forge/embed/embedder.hpp"
#include "forge/icp/icp.hpp"
#include "forge/metrics/metrics.hpp"
#include "forge/mlm/checkpoint.hpp"
#include "forge/mlm/training.hpp"
#include "forge/rcd/rcd.hpp"
#include "forge/rcd/teacher.hpp"
#include "forge/serving/service.hpp"
#include "forge/serving/snapshot.hpp"
#include "forge/synth/world.hpp"
#include "forge/util/io.hpp"

namespace forge::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RunLog {
 public:
  RunLog(const std::string& path, std::ostream& fallback) : fallback_(fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::app);
      if (!file_) throw std::runtime_error("cannot open run log " + path);
    }
  }

  void event(std::string_view name, ojson fields = ojson::object()) {
    ojson j;
    j["ts"] = serving::utc_now_iso();
    j["event"] = name;
    for (auto& [k, v] : fields.items()) j[k] = v;
    std::ostream& os = file_.is_open() ? static_cast<std::ostream&>(file_) : fallback_;
    os << j.dump() << '\n';
    os.flush();
  }

 private:
  std::ofstream file_;
  std::ostream& fallback_;
};

/// Outputs are staged in memory and renamed into place together, so a stage
/// that fails leaves nothing behind.
class Outputs {
 public:
  void add(const fs::path& path, std::string content) {
    staged_.emplace_back(path, std::move(content));
  }
  std::vector<std::string> commit() {
    std::vector<std::string> written;
    try {
      for (const auto& [path, content] : staged_) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_file_atomic(path, content);
        written.push_back(path.string());
      }
    } catch (...) {
      for (const auto& p : written) {
        std::error_code ec;
        fs::remove(p, ec);
      }
      throw;
    }
    return written;
  }

 private:
  std::vector<std::pair<fs::path, std::string>> staged_;
};

struct Ctx {
  std::string command;
  RunConfig cfg;
  std::string digest;
  RunLog& log;
  std::ostream& out;
  std::ostream& err;
  Outputs outputs;
  ojson summary = ojson::object();
};

void need(const std::string& value, std::string_view key) {
  if (value.empty()) throw MissingInputError(flag_name(key) + " is required");
}

const std::string& input(const std::string& path, std::string_view key) {
  need(path, key);
  require_file(path, key);
  return path;
}

std::string header(const Ctx& c, std::string artifact, ojson extra = ojson::object()) {
  nlohmann::json e = nlohmann::json::object();
  for (auto& [k, v] : extra.items()) e[k] = v;
  return header_line({std::move(artifact), c.digest, c.cfg.seed, e});
}

mlm::RelevancePrompt prompt_of(const RunConfig& cfg) {
  mlm::RelevancePrompt p{cfg.prompt_template, cfg.verbalizer_negative, cfg.verbalizer_positive};
  p.validate();
  return p;
}

embed::EmbedderConfig embedder_of(const RunConfig& cfg) {
  embed::EmbedderConfig e;
  e.dimension = cfg.embed_dim;
  e.ngram_min = cfg.ngram_min;
  e.ngram_max = cfg.ngram_max;
  return e;
}

icp::ScreenConfig screen_of(const RunConfig& cfg) {
  icp::ScreenConfig s;
  s.sigma = cfg.sigma;
  s.max_candidates = cfg.max_candidates;
  s.min_candidates = cfg.min_candidates;
  return s;
}

icp::IcpTemplate icp_template_of(const RunConfig& cfg) {
  icp::IcpTemplate t;
  t.q2i = cfg.icp_q2i_template;
  t.i2q = cfg.icp_i2q_template;
  return t;
}

dke::MaskConfig mask_of(const RunConfig& cfg) {
  dke::MaskConfig m;
  m.token_mask_rate = cfg.mask_rate;
  m.rng_seed = cfg.seed;
  m.validate();
  return m;
}

mlm::ModelConfig model_of(const RunConfig& cfg) {
  mlm::ModelConfig m;
  m.dim = cfg.dim;
  m.activation = mlm::activation_from_string(cfg.activation);
  m.init_scale = cfg.init_scale;
  m.seed = cfg.seed;
  return m;
}

template <class R>
void note_parse(Ctx& c, std::string_view what, const R& r) {
  c.summary[std::string(what) + "_records"] = r.lines - r.errors.size();
  if (!r.errors.empty()) {
    c.summary[std::string(what) + "_bad_records"] = r.errors.size();
    c.log.event("bad_records", {{"input", what},
                                {"count", r.errors.size()},
                                {"first_line", r.errors.front().line},
                                {"first_error", r.errors.front().message}});
  }
}

corpus::Catalog catalog_from(Ctx& c) {
  auto r = corpus::load_item_catalog(input(c.cfg.items, "items"));
  note_parse(c, "items", r);
  return std::move(r.items);
}

std::vector<corpus::ClickRecord> clicks_from(Ctx& c) {
  auto r = corpus::load_click_log(input(c.cfg.clicks, "clicks"));
  note_parse(c, "clicks", r);
  return std::move(r.records);
}

std::vector<corpus::LabeledTriple> triples_from(Ctx& c) {
  auto r = corpus::load_labeled_triples(input(c.cfg.triples, "triples"));
  note_parse(c, "triples", r);
  return std::move(r.records);
}

template <class F>
std::vector<nlohmann::json> read_records(const std::string& path, F&& on_header) {
  std::ifstream in(path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line);
    if (is_header_record(j)) {
      on_header(j.at("_header"));
    } else {
      out.push_back(std::move(j));
    }
  }
  return out;
}

std::string default_vocab_path(const std::string& dke_path) { return dke_path + ".vocab"; }

// --- subcommands -----------------------------------------------------------

void cmd_synth(Ctx& c) {
  need(c.cfg.out_dir, "out_dir");
  synth::WorldConfig wc = synth::preset(c.cfg.world);
  auto override_count = [](std::size_t& field, std::size_t v) {
    if (v != 0) field = v;
  };
  override_count(wc.n_items, c.cfg.n_items);
  override_count(wc.n_queries, c.cfg.n_queries);
  override_count(wc.n_clicks, c.cfg.n_clicks);
  override_count(wc.n_categories, c.cfg.n_categories);
  override_count(wc.n_train, c.cfg.n_train);
  override_count(wc.n_valid, c.cfg.n_valid);
  override_count(wc.n_test, c.cfg.n_test);
  wc.seed = c.cfg.seed;
  wc.validate();
  const synth::World world = synth::generate_world(wc);
  const fs::path dir = c.cfg.out_dir;
  auto emit = [&](const std::string& name, const auto& records) {
    std::string body = header(c, name);
    for (const auto& r : records) {
      body += corpus::serialize(r);
      body += '\n';
    }
    c.outputs.add(dir / (name + ".jsonl"), std::move(body));
  };
  emit("items", world.items);
  emit("clicks", world.clicks);
  emit("train", world.train);
  emit("valid", world.valid);
  emit("test", world.test);
  c.summary["items"] = world.items.size();
  c.summary["clicks"] = world.clicks.size();
  c.summary["triples"] = {world.train.size(), world.valid.size(), world.test.size()};
}

void cmd_icp(Ctx& c) {
  const auto clicks = clicks_from(c);
  const auto catalog = catalog_from(c);
  need(c.cfg.out, "out");
  const embed::HashedNgramEncoder encoder(embedder_of(c.cfg));
  const auto screen = screen_of(c.cfg);
  screen.validate();
  const auto result =
      icp::build_icp_instances(clicks, catalog, encoder, screen, icp_template_of(c.cfg), c.cfg.jobs);
  std::string body = header(c, "icp", {{"sigma", c.cfg.sigma}});
  for (const auto& inst : result.instances) body += icp::to_json(inst).dump() + "\n";
  c.outputs.add(c.cfg.out, std::move(body));
  c.summary["instances"] = result.instances.size();
  c.summary["skipped_anchors"] = result.stats.skipped;
  c.summary["filtered"] = result.stats.screen.filtered;
}

void cmd_dke(Ctx& c) {
  const auto catalog = catalog_from(c);
  const auto clicks = clicks_from(c);
  need(c.cfg.out, "out");
  const auto prompt = prompt_of(c.cfg);
  const dke::Vocab vocab = dke::Vocab::build(
      pipeline::vocab_corpus(catalog, clicks, {}, icp_template_of(c.cfg), prompt), 1, 0,
      {prompt.negative, prompt.positive});
  const auto mappings = icp::build_mappings(clicks);
  const auto result = dke::emit_dke_examples(catalog, mappings.i2q, vocab, c.cfg.k, mask_of(c.cfg),
                                             c.cfg.mask_epochs, c.cfg.jobs);
  const std::string vocab_path = c.cfg.vocab.empty() ? default_vocab_path(c.cfg.out) : c.cfg.vocab;
  c.outputs.add(c.cfg.out, header(c, "dke", {{"k", c.cfg.k}, {"vocab_digest", vocab.digest()}}) +
                               pipeline::serialize_dke_pairs(result.pairs));
  c.outputs.add(vocab_path, vocab.serialize());
  c.summary["pairs"] = result.pairs.size();
  c.summary["item_only"] = result.stats.item_only;
  c.summary["truncated"] = result.stats.truncated;
  c.summary["vocab_size"] = vocab.size();
}

std::unique_ptr<rcd::TeacherClient> make_teacher(const RunConfig& cfg, bool& is_mock) {
  is_mock = cfg.teacher == "mock";
  if (is_mock) {
    rcd::MockTeacherConfig mc;
    mc.seed = cfg.seed;
    mc.failure_rate = cfg.teacher_failure_rate;
    return std::make_unique<rcd::MockTeacher>(mc);
  }
  rcd::TeacherClientConfig tc;
  tc.endpoint = cfg.teacher;
  tc.timeout = std::chrono::milliseconds(cfg.teacher_timeout_ms);
  tc.max_retries = cfg.max_retries;
  tc.backoff = std::chrono::milliseconds(cfg.backoff_ms);
  return std::make_unique<rcd::HttpTeacher>(tc);
}

void cmd_rcd(Ctx& c) {
  const auto catalog = catalog_from(c);
  need(c.cfg.out, "out");
  bool is_mock = false;
  auto teacher = make_teacher(c.cfg, is_mock);
  rcd::RcdConfig rc;
  rc.prompts.num_queries = c.cfg.num_queries;
  rc.prompts.validate();
  rc.retry.max_retries = c.cfg.max_retries;
  rc.retry.backoff = std::chrono::milliseconds(c.cfg.backoff_ms);
  rc.validate.sigma_rcd = c.cfg.sigma_rcd;
  rc.parallelism = c.cfg.rcd_parallelism;
  const embed::HashedNgramEncoder encoder(embedder_of(c.cfg));
  // The mock fails instantly, so waiting between its retries buys nothing.
  const rcd::Sleeper sleep = is_mock ? rcd::Sleeper([](std::chrono::milliseconds) {})
                                     : rcd::real_sleeper();
  std::optional<rcd::RcdCache> cache;
  if (!c.cfg.rcd_cache.empty()) cache.emplace(c.cfg.rcd_cache);
  const auto result = rcd::run_rcd(catalog, *teacher, encoder, rc, sleep, cache ? &*cache : nullptr);

  std::string body = header(c, "rcd", {{"prompts_digest", rc.prompts.digest()}});
  for (const auto& inst : result.instances) body += rcd::to_json(inst).dump() + "\n";
  c.outputs.add(c.cfg.out, std::move(body));
  const std::string report_path =
      c.cfg.failure_report.empty() ? c.cfg.out + ".failures.json" : c.cfg.failure_report;
  ojson report = ojson::object();
  report["_header"] = {{"artifact", "rcd_failures"}, {"config_digest", c.digest},
                       {"format_version", 1}, {"seed", c.cfg.seed}};
  const ojson failures = rcd::failure_report(result);
  for (const auto& [k, v] : failures.items()) report[k] = v;
  c.outputs.add(report_path, report.dump(2) + "\n");
  c.summary["items"] = result.stats.items;
  c.summary["accepted"] = result.stats.accepted;
  c.summary["failures"] = result.failures.size();
  c.summary["cache_hits"] = result.stats.cache_hits;
  c.summary["failure_report"] = report_path;
}

std::vector<std::string> texts_from(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& j : read_records(path, [](const nlohmann::json&) {})) {
    out.push_back(j.at("text").get<std::string>());
  }
  return out;
}

void cmd_pretrain(Ctx& c) {
  if (c.cfg.dke.empty() && c.cfg.icp.empty() && c.cfg.rcd.empty()) {
    throw MissingInputError("pretrain needs at least one of --dke, --icp, --rcd");
  }
  need(c.cfg.out, "out");
  std::vector<std::string> icp_docs, rcd_docs;
  if (!c.cfg.icp.empty()) icp_docs = texts_from(input(c.cfg.icp, "icp"));
  if (!c.cfg.rcd.empty()) rcd_docs = texts_from(input(c.cfg.rcd, "rcd"));
  const auto prompt = prompt_of(c.cfg);

  std::string vocab_path = c.cfg.vocab;
  if (vocab_path.empty() && !c.cfg.dke.empty()) vocab_path = default_vocab_path(c.cfg.dke);
  dke::Vocab vocab;
  if (!vocab_path.empty()) {
    vocab = dke::Vocab::parse(read_file(input(vocab_path, "vocab")));
  } else {
    std::vector<std::string> texts = icp_docs;
    texts.insert(texts.end(), rcd_docs.begin(), rcd_docs.end());
    for (auto& t : pipeline::fixed_vocab_text(icp_template_of(c.cfg), prompt)) texts.push_back(t);
    vocab = dke::Vocab::build(texts, 1, 0, {prompt.negative, prompt.positive});
  }

  std::vector<mlm::PretrainUnit> units;
  if (!c.cfg.dke.empty()) {
    std::ifstream in(input(c.cfg.dke, "dke"));
    nlohmann::json h;
    units = pipeline::read_dke_units(in, &h);
    if (h.contains("vocab_digest") && h["vocab_digest"] != vocab.digest()) {
      throw StageError("dke instances were built with a different vocabulary than " + vocab_path);
    }
  }
  const auto mask = mask_of(c.cfg);
  const auto icp_u = pipeline::text_units(icp_docs, vocab, mask, c.cfg.mask_epochs, 1);
  const auto rcd_u = pipeline::text_units(rcd_docs, vocab, mask, c.cfg.mask_epochs, 2);
  const std::size_t n_dke = units.size();
  units.insert(units.end(), icp_u.begin(), icp_u.end());
  units.insert(units.end(), rcd_u.begin(), rcd_u.end());
  if (units.empty()) throw StageError("no pretraining units in the given inputs");

  mlm::Checkpoint ckpt{vocab, mlm::TrainableMlm(vocab.size(), model_of(c.cfg)), {}};
  mlm::PretrainConfig pc;
  pc.mix.alpha = c.cfg.alpha;
  pc.optimizer.kind = mlm::optimizer_from_string(c.cfg.optimizer);
  pc.optimizer.lr = c.cfg.lr;
  pc.optimizer.validate();
  pc.batch_size = c.cfg.batch_size;
  pc.epochs = c.cfg.epochs;
  pc.max_steps = c.cfg.steps;
  pc.seed = c.cfg.seed;
  const auto report = mlm::pretrain(ckpt.model, units, pc);
  ckpt.meta = {{"stage", "pretrain"}, {"config_digest", c.digest}, {"seed", c.cfg.seed},
               {"steps", report.steps}, {"alpha", c.cfg.alpha}};
  c.outputs.add(c.cfg.out, mlm::serialize_checkpoint(ckpt));
  c.summary["units"] = {{"dke", n_dke}, {"icp", icp_u.size()}, {"rcd", rcd_u.size()}};
  c.summary["steps"] = report.steps;
  c.summary["aborted_steps"] = report.aborted_steps;
  c.summary["epoch_loss"] = report.epoch_loss;
}

void cmd_sft(Ctx& c) {
  auto ckpt = mlm::load_checkpoint(input(c.cfg.model, "model"));
  const auto triples = triples_from(c);
  const auto catalog = catalog_from(c);
  need(c.cfg.out, "out");
  const auto prompt = prompt_of(c.cfg);
  std::size_t skipped = 0;
  const auto examples = mlm::render_sft_examples(triples, catalog, ckpt.vocab, prompt, &skipped);
  if (examples.empty()) throw StageError("no training triple resolves against the catalog");
  mlm::SftConfig sc;
  sc.optimizer.lr = c.cfg.sft_lr;
  sc.optimizer.validate();
  sc.batch_size = c.cfg.sft_batch_size;
  sc.epochs = c.cfg.sft_epochs;
  sc.seed = c.cfg.seed;
  const auto report = mlm::train_sft(ckpt.model, examples, mlm::verbalizer_ids(prompt, ckpt.vocab), sc);
  ckpt.meta["stage"] = "sft";
  ckpt.meta["config_digest"] = c.digest;
  ckpt.meta["seed"] = c.cfg.seed;
  ckpt.meta["sft_steps"] = report.steps;
  c.outputs.add(c.cfg.out, mlm::serialize_checkpoint(ckpt));
  c.summary["examples"] = examples.size();
  c.summary["skipped"] = skipped;
  c.summary["steps"] = report.steps;
  c.summary["epoch_loss"] = report.epoch_loss;
}

void cmd_eval(Ctx& c) {
  const auto ckpt = mlm::load_checkpoint(input(c.cfg.model, "model"));
  const auto triples = triples_from(c);
  const auto catalog = catalog_from(c);
  need(c.cfg.report, "report");
  std::size_t skipped = 0;
  const auto records =
      pipeline::score_triples(ckpt.model, ckpt.vocab, prompt_of(c.cfg), triples, catalog, &skipped);
  if (records.empty()) throw StageError("no evaluation triple resolves against the catalog");
  const std::vector<std::size_t> edges(c.cfg.bucket_edges.begin(), c.cfg.bucket_edges.end());
  const auto report = metrics::evaluate(records, edges);
  ojson j;
  j["_header"] = {{"artifact", "eval_report"}, {"config_digest", c.digest},
                  {"format_version", 1}, {"seed", c.cfg.seed},
                  {"model_checkpoint_digest", mlm::checkpoint_digest(ckpt)}};
  const ojson metrics_json = metrics::to_json(report);
  for (const auto& [k, v] : metrics_json.items()) j[k] = v;
  j["skipped"] = skipped;
  c.outputs.add(c.cfg.report, j.dump(2) + "\n");
  c.summary["acc"] = report.acc;
  c.summary["f1"] = report.f1;
  c.summary["auc"] = report.auc ? ojson(*report.auc) : ojson();
  c.out << metrics_json.dump() << "\n";
}

void cmd_snapshot(Ctx& c) {
  const auto ckpt = mlm::load_checkpoint(input(c.cfg.model, "model"));
  const auto catalog = catalog_from(c);
  need(c.cfg.out, "out");
  std::vector<serving::QueryItemPair> pairs;
  if (!c.cfg.pairs.empty()) {
    pairs = serving::load_pairs(input(c.cfg.pairs, "pairs"));
  } else if (!c.cfg.clicks.empty()) {
    const auto clicks = clicks_from(c);
    pairs = serving::top_clicked_pairs(clicks, c.cfg.max_pairs == 0 ? clicks.size() : c.cfg.max_pairs);
  } else {
    throw MissingInputError("snapshot needs --pairs or --clicks");
  }
  serving::SnapshotHeader h;
  h.model_checkpoint_digest = mlm::checkpoint_digest(ckpt);
  h.created_at = c.cfg.created_at.empty() ? serving::utc_now_iso() : c.cfg.created_at;
  h.version = serving::version_from_timestamp(h.created_at);
  h.config_digest = c.digest;
  h.seed = c.cfg.seed;
  serving::BatchScoreStats stats;
  const auto snap =
      serving::batch_score(ckpt.model, ckpt.vocab, prompt_of(c.cfg), pairs, catalog, h, &stats);
  c.outputs.add(c.cfg.out, serving::serialize_snapshot(snap));
  c.summary["entries"] = snap.size();
  c.summary["unresolved"] = stats.unresolved;
  c.summary["duplicates"] = stats.duplicates;
  c.summary["version"] = snap.header().version;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address must be host:port, got '" + addr + "'");
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in address '" + addr + "'");
  }
  return {addr.substr(0, colon), port};
}

void cmd_serve(Ctx& c) {
  auto ckpt = mlm::load_checkpoint(input(c.cfg.online, "online"));
  auto catalog = catalog_from(c);
  std::shared_ptr<const serving::Snapshot> snap;
  if (!c.cfg.snapshot.empty()) {
    snap = std::make_shared<const serving::Snapshot>(
        serving::load_snapshot(input(c.cfg.snapshot, "snapshot")));
  }
  auto online = std::make_shared<const serving::ModelScorer>(std::move(ckpt), std::move(catalog),
                                                             prompt_of(c.cfg));
  serving::RelevanceService service(snap, online);
  serving::HttpFrontend http(service);
  const auto [host, port] = split_addr(c.cfg.listen);

  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  const int bound = http.bind(host, port);
  if (bound < 0) throw StageError("cannot listen on " + c.cfg.listen);
  c.log.event("listening", {{"host", host}, {"port", bound},
                            {"snapshot", service.snapshot()->header().version}});
  c.out << "listening on " << host << ":" << bound << std::endl;
  std::thread server([&] { http.serve(); });
  int sig = 0;
  sigwait(&sigs, &sig);
  http.stop();
  server.join();
  const auto m = service.metrics();
  c.summary["hits"] = m.hits;
  c.summary["misses"] = m.misses;
  c.summary["errors"] = m.errors;
}

void cmd_swap(Ctx& c) {
  need(c.cfg.snapshot, "snapshot");
  require_file(c.cfg.snapshot, "snapshot");
  const auto [host, port] = split_addr(c.cfg.admin);
  httplib::Client client(host, port);
  const std::string body = ojson{{"snapshot", fs::absolute(c.cfg.snapshot).string()}}.dump();
  auto res = client.Post("/admin/swap", body, "application/json");
  if (!res) throw StageError("admin endpoint " + c.cfg.admin + " unreachable");
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (res->status != 200) {
    throw StageError("swap refused: " +
                     (j.is_object() && j.contains("error") ? j["error"].get<std::string>() : res->body));
  }
  c.summary["version"] = j.value("version", "");
  c.out << "swapped to " << j.value("version", "") << "\n";
}

void cmd_ablate(Ctx& c) {
  ablation::AblationConfig ac;
  ac.world = synth::preset(c.cfg.world);
  ac.embedder = embedder_of(c.cfg);
  ac.screen = screen_of(c.cfg);
  ac.model = model_of(c.cfg);
  ac.prompt = prompt_of(c.cfg);
  ac.mask = mask_of(c.cfg);
  ac.dke_top_k = c.cfg.k;
  ac.pretrain_epochs = c.cfg.ablate_mask_epochs;
  ac.pretrain.mix.alpha = c.cfg.alpha;
  ac.pretrain.optimizer.kind = mlm::optimizer_from_string(c.cfg.optimizer);
  ac.pretrain.optimizer.lr = c.cfg.lr;
  ac.pretrain.batch_size = c.cfg.batch_size;
  ac.pretrain.epochs = c.cfg.epochs;
  ac.sft.optimizer.lr = c.cfg.sft_lr;
  ac.sft.batch_size = c.cfg.sft_batch_size;
  ac.sft.epochs = c.cfg.sft_epochs;
  ac.jobs = c.cfg.jobs;
  if (c.cfg.seeds.empty()) throw ConfigError("--seeds must list at least one seed");

  std::vector<ablation::SeedResult> results;
  ojson seeds = ojson::array();
  bool all_ok = true;
  for (std::uint64_t seed : c.cfg.seeds) {
    results.push_back(ablation::run_seed(ac, seed));
    const auto check = ablation::check_ordering(results.back());
    all_ok = all_ok && check.ok();
    ojson j = ablation::to_json(results.back());
    j["ordering"] = {{"baseline_floor", check.baseline_floor},
                     {"singles_above", check.singles_above},
                     {"full_margin", check.full_margin}};
    seeds.push_back(std::move(j));
    c.log.event("ablate_seed", seeds.back());
  }
  const std::string table = ablation::format_table(results);
  c.out << table;
  c.out << "ordering " << (all_ok ? "holds" : "violated") << " on " << results.size() << " seed(s)\n";
  if (!c.cfg.out.empty()) {
    ojson j;
    j["_header"] = {{"artifact", "ablation"}, {"config_digest", c.digest},
                    {"format_version", 1}, {"seed", c.cfg.seed}};
    j["world"] = c.cfg.world;
    j["seeds"] = std::move(seeds);
    j["ordering_ok"] = all_ok;
    c.outputs.add(c.cfg.out, j.dump(2) + "\n");
  }
  c.summary["ordering_ok"] = all_ok;
}

struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> keys;
  void (*fn)(Ctx&);
};

const std::vector<Command>& commands() {
  static const std::vector<std::string> prompt_keys = {"prompt_template", "verbalizer_negative",
                                                       "verbalizer_positive"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  static const std::vector<Command> cmds = {
      {"synth", "generate a synthetic catalog, click log and labeled splits",
       {"out_dir", "world", "n_items", "n_queries", "n_clicks", "n_categories", "n_train",
        "n_valid", "n_test"},
       cmd_synth},
      {"icp", "build in-context pretraining instances from clicks",
       {"clicks", "items", "out", "sigma", "max_candidates", "min_candidates", "embed_dim",
        "ngram_min", "ngram_max", "icp_q2i_template", "icp_i2q_template"},
       cmd_icp},
      {"dke", "build masked joint sequences of items and their top queries",
       with({"items", "clicks", "out", "vocab", "k", "max_length", "mask_rate", "mask_epochs"},
            prompt_keys),
       cmd_dke},
      {"rcd", "distill summaries, queries and reasons from a teacher",
       {"items", "out", "teacher", "teacher_failure_rate", "failure_report", "rcd_cache",
        "sigma_rcd", "num_queries", "max_retries", "backoff_ms", "teacher_timeout_ms",
        "rcd_parallelism", "embed_dim", "ngram_min", "ngram_max"},
       cmd_rcd},
      {"pretrain", "continually pretrain the masked LM",
       with({"dke", "icp", "rcd", "vocab", "out", "alpha", "steps", "epochs", "batch_size", "lr",
             "optimizer", "dim", "activation", "init_scale", "mask_rate", "mask_epochs"},
            prompt_keys),
       cmd_pretrain},
      {"sft", "fine-tune on labeled triples",
       with({"model", "triples", "items", "out", "sft_epochs", "sft_lr", "sft_batch_size"},
            prompt_keys),
       cmd_sft},
      {"eval", "score triples and report acc, f1, auc and length buckets",
       with({"model", "triples", "items", "report", "bucket_edges"}, prompt_keys), cmd_eval},
      {"snapshot", "batch-score query-item pairs into a cache snapshot",
       with({"model", "pairs", "clicks", "items", "out", "max_pairs", "created_at"}, prompt_keys),
       cmd_snapshot},
      {"serve", "serve relevance scores from a snapshot with online fallback",
       with({"online", "snapshot", "items", "listen"}, prompt_keys), cmd_serve},
      {"swap", "ask a running server to load a new snapshot", {"snapshot", "admin"}, cmd_swap},
      {"ablate", "run the pretraining-task ablation on a synthetic world",
       {"world", "seeds", "out", "ablate_mask_epochs", "sigma", "k", "alpha", "dim", "lr",
        "sft_lr", "sft_epochs", "epochs", "batch_size", "sft_batch_size"},
       cmd_ablate},
  };
  return cmds;
}

// Removes anything a failed stage may have left, then writes an error report
// next to the run log or the primary output.
std::string write_error_report(const Ctx& c, const std::string& what) {
  std::string path;
  if (!c.cfg.run_log.empty()) {
    path = c.cfg.run_log + ".error.json";
  } else if (!c.cfg.out.empty()) {
    path = c.cfg.out + ".error.json";
  } else if (!c.cfg.report.empty()) {
    path = c.cfg.report + ".error.json";
  } else {
    path = "forge-" + c.command + ".error.json";
  }
  ojson j;
  j["command"] = c.command;
  j["error"] = what;
  j["config_digest"] = c.digest;
  j["seed"] = c.cfg.seed;
  j["config"] = to_json(c.cfg);
  try {
    write_file_atomic(path, j.dump(2) + "\n");
  } catch (const std::exception&) {
    return "";
  }
  return path;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"forge: continual-pretraining pipeline for search relevance", "forge"};
  app.require_subcommand(1);
  std::string config_path;
  // One string slot per (command, key); filled only when the flag is given.
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, CLI::App*> subs;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  for (const auto& cmd : commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    subs[cmd.name] = sub;
    sub->allow_extras();
    sub->add_option("--config", config_path, "TOML-style config file");
    std::vector<std::string> keys = cmd.keys;
    for (const char* k : {"seed", "jobs", "run_log"}) keys.emplace_back(k);
    for (const auto& key : keys) {
      const FieldInfo* f = find_field(key);
      if (!f) throw std::logic_error("command " + std::string(cmd.name) + " uses unknown key " + key);
      options[cmd.name][key] =
          sub->add_option(flag_name(key), values[cmd.name][key], std::string(to_string(f->type)));
    }
  }

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "forge: " << e.what() << "\n";
    return kExitMissingInput;
  }

  const Command* cmd = nullptr;
  for (const auto& c : commands()) {
    if (subs[c.name]->parsed()) cmd = &c;
  }
  const auto extras = subs[cmd->name]->remaining();
  if (!extras.empty()) {
    std::string key = extras.front();
    if (key.rfind("--", 0) != 0) {
      err << "forge " << cmd->name << ": unexpected argument '" << key << "'\n";
      return kExitMissingInput;
    }
    key = key.substr(2, key.find('=') == std::string::npos ? std::string::npos : key.find('=') - 2);
    std::replace(key.begin(), key.end(), '-', '_');
    err << "forge " << cmd->name << ": unknown option --" << extras.front().substr(2)
        << "; did you mean " << flag_name(nearest_key(key)) << "?\n";
    return kExitMissingInput;
  }
  std::map<std::string, std::string> flags;
  for (const auto& [key, opt] : options[cmd->name]) {
    if (opt->count() > 0) flags[key] = values[cmd->name][key];
  }

  RunConfig cfg;
  try {
    cfg = load_config(config_path, flags);
  } catch (const MissingInputError& e) {
    err << "forge " << cmd->name << ": " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const ConfigError& e) {
    err << "forge " << cmd->name << ": " << e.what() << "\n";
    return kExitMissingInput;
  }

  std::unique_ptr<RunLog> log;
  try {
    log = std::make_unique<RunLog>(cfg.run_log, err);
  } catch (const std::exception& e) {
    err << "forge " << cmd->name << ": " << e.what() << "\n";
    return kExitMissingInput;
  }
  Ctx ctx{cmd->name, cfg, config_digest(cfg), *log, out, err, {}, ojson::object()};
  log->event("start", {{"command", ctx.command}, {"config_digest", ctx.digest},
                       {"seed", cfg.seed}, {"config", to_json(cfg)}});
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    cmd->fn(ctx);
    const auto written = ctx.outputs.commit();
    log->event("done", {{"command", ctx.command}, {"status", kExitOk}, {"outputs", written},
                        {"summary", ctx.summary}, {"elapsed_ms", elapsed_ms()}});
    return kExitOk;
  } catch (const MissingInputError& e) {
    log->event("error", {{"command", ctx.command}, {"status", kExitMissingInput},
                         {"kind", "missing_input"}, {"error", e.what()}});
    err << "forge " << ctx.command << ": " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const ConfigError& e) {
    log->event("error", {{"command", ctx.command}, {"status", kExitMissingInput},
                         {"kind", "config"}, {"error", e.what()}});
    err << "forge " << ctx.command << ": " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    const std::string report = write_error_report(ctx, e.what());
    log->event("error", {{"command", ctx.command}, {"status", kExitStageFailure},
                         {"kind", "stage_failure"}, {"error", e.what()}, {"report", report}});
    err << "forge " << ctx.command << ": " << e.what() << "\n";
    if (!report.empty()) err << "error report: " << report << "\n";
    return kExitStageFailure;
  }
}

}  // namespace forge::cli
