#include "forge/cli/ablation.hpp"

#include <cstdio>
#include <stdexcept>

#include "forge/cli/pipeline.hpp"

namespace forge::ablation {

std::vector<Variant> standard_variants() {
  return {{"baseline", false, false, false}, {"+DKE", true, false, false},
          {"+ICP", false, true, false},      {"+RCD", false, false, true},
          {"+DKE+ICP", true, true, false},   {"+DKE+ICP+RCD", true, true, true}};
}

SeedResult run_seed(const AblationConfig& cfg, std::uint64_t seed,
                    const std::vector<Variant>& variants) {
  synth::WorldConfig wc = cfg.world;
  wc.seed = seed;
  const synth::World world = synth::generate_world(wc);
  const corpus::Catalog catalog = world.catalog();
  const embed::HashedNgramEncoder encoder(cfg.embedder);

  const auto icp_result =
      icp::build_icp_instances(world.clicks, catalog, encoder, cfg.screen, {}, cfg.jobs);
  rcd::MockTeacher teacher({seed, 0.0, 0.0});
  rcd::RcdConfig rcd_cfg;
  const auto rcd_result = rcd::run_rcd(catalog, teacher, encoder, rcd_cfg, {});
  const auto icp_docs = pipeline::icp_texts(icp_result.instances);
  const auto rcd_docs = pipeline::rcd_texts(rcd_result.instances);

  std::vector<std::string> docs = icp_docs;
  docs.insert(docs.end(), rcd_docs.begin(), rcd_docs.end());
  const dke::Vocab vocab = dke::Vocab::build(
      pipeline::vocab_corpus(catalog, world.clicks, docs, icp::IcpTemplate{}, cfg.prompt), 1, 0,
      {cfg.prompt.negative, cfg.prompt.positive});

  dke::MaskConfig mask = cfg.mask;
  mask.rng_seed = seed;
  const auto mappings = icp::build_mappings(world.clicks);
  const auto dke_result = dke::emit_dke_examples(catalog, mappings.i2q, vocab, cfg.dke_top_k, mask,
                                                 cfg.pretrain_epochs, cfg.jobs);
  const auto dke_u = pipeline::dke_units(dke_result);
  const auto icp_u = pipeline::text_units(icp_docs, vocab, mask, cfg.pretrain_epochs, 1);
  const auto rcd_u = pipeline::text_units(rcd_docs, vocab, mask, cfg.pretrain_epochs, 2);

  const auto train = mlm::render_sft_examples(world.train, catalog, vocab, cfg.prompt);
  const auto verbalizers = mlm::verbalizer_ids(cfg.prompt, vocab);

  SeedResult out;
  out.seed = seed;
  for (const auto& v : variants) {
    mlm::ModelConfig mc = cfg.model;
    mc.seed = seed;
    mlm::TrainableMlm model(vocab.size(), mc);
    std::vector<mlm::PretrainUnit> units;
    if (v.dke) units.insert(units.end(), dke_u.begin(), dke_u.end());
    if (v.icp) units.insert(units.end(), icp_u.begin(), icp_u.end());
    if (v.rcd) units.insert(units.end(), rcd_u.begin(), rcd_u.end());
    if (!units.empty()) {
      mlm::PretrainConfig pc = cfg.pretrain;
      pc.seed = seed;
      mlm::pretrain(model, units, pc);
    }
    mlm::SftConfig sc = cfg.sft;
    sc.seed = seed;
    mlm::train_sft(model, train, verbalizers, sc);
    const auto records = pipeline::score_triples(model, vocab, cfg.prompt, world.test, catalog);
    out.rows.push_back({v, units.size(), metrics::evaluate(records, std::vector<std::size_t>{5, 10, 15})});
  }
  return out;
}

OrderingCheck check_ordering(const SeedResult& r, double floor, double margin) {
  const VariantResult* base = nullptr;
  const VariantResult* full = nullptr;
  for (const auto& row : r.rows) {
    if (!row.variant.dke && !row.variant.icp && !row.variant.rcd) base = &row;
    if (row.variant.dke && row.variant.icp && row.variant.rcd) full = &row;
  }
  if (!base || !full || !base->test.auc || !full->test.auc) {
    throw std::invalid_argument("ablation result lacks baseline or full row");
  }
  const double b = *base->test.auc;
  OrderingCheck c;
  c.baseline_floor = b >= floor;
  c.full_margin = *full->test.auc >= b + margin;
  c.singles_above = true;
  for (const auto& row : r.rows) {
    const int n = row.variant.dke + row.variant.icp + row.variant.rcd;
    if (n == 1) c.singles_above = c.singles_above && row.test.auc && *row.test.auc >= b;
  }
  return c;
}

nlohmann::ordered_json to_json(const SeedResult& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json e;
    e["variant"] = row.variant.name;
    e["pretrain_units"] = row.pretrain_units;
    e["acc"] = row.test.acc;
    e["f1"] = row.test.f1;
    e["auc"] = row.test.auc ? nlohmann::ordered_json(*row.test.auc) : nlohmann::ordered_json();
    rows.push_back(std::move(e));
  }
  return j;
}

std::string format_table(const std::vector<SeedResult>& results) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %-14s %8s %8s %8s\n", "seed", "variant", "acc", "f1", "auc");
  out += buf;
  for (const auto& r : results) {
    for (const auto& row : r.rows) {
      std::snprintf(buf, sizeof buf, "%-6llu %-14s %8.4f %8.4f %8.4f\n",
                    static_cast<unsigned long long>(r.seed), row.variant.name.c_str(),
                    row.test.acc, row.test.f1, row.test.auc.value_or(-1.0));
      out += buf;
    }
  }
  return out;
}

}  // namespace forge::ablation
