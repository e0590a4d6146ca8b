#include "forge/cli/pipeline.hpp"

#include <istream>

#include "forge/util/digest.hpp"
#include "forge/util/io.hpp"
#include "forge/util/rng.hpp"

namespace forge::pipeline {

std::vector<std::string> fixed_vocab_text(const icp::IcpTemplate& icp_tmpl,
                                          const mlm::RelevancePrompt& prompt) {
  std::vector<std::string> out = {icp_tmpl.q2i, icp_tmpl.i2q, icp_tmpl.exemplar_line,
                                  "Summary: Background: Service: Query: Reason:"};
  for (auto& t : prompt.vocabulary_text()) out.push_back(std::move(t));
  return out;
}

std::vector<std::string> vocab_corpus(const corpus::Catalog& catalog,
                                      std::span<const corpus::ClickRecord> clicks,
                                      std::span<const std::string> documents,
                                      const icp::IcpTemplate& icp_tmpl,
                                      const mlm::RelevancePrompt& prompt) {
  std::vector<std::string> texts;
  for (const auto& [id, item] : catalog) {
    for (const auto& [name, value] : item.fields) texts.push_back(name + ": " + value);
    texts.push_back(corpus::item_text(item));
  }
  for (const auto& c : clicks) texts.push_back(c.query);
  texts.insert(texts.end(), documents.begin(), documents.end());
  for (auto& t : fixed_vocab_text(icp_tmpl, prompt)) texts.push_back(std::move(t));
  return texts;
}

std::vector<mlm::PretrainUnit> text_units(std::span<const std::string> texts,
                                          const dke::Vocab& vocab, const dke::MaskConfig& mask,
                                          std::size_t epochs, std::uint64_t stream) {
  std::vector<mlm::PretrainUnit> out;
  out.reserve(texts.size() * epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto seq = dke::plain_sequence(texts[i], vocab);
      if (seq.size() == 0) continue;
      Rng rng(splitmix64(mask.rng_seed ^ splitmix64(stream)) + splitmix64(i * 1315423911ULL + e));
      out.push_back({dke::apply_token_mask(seq, mask, rng, vocab.size()), std::nullopt});
    }
  }
  return out;
}

std::vector<mlm::PretrainUnit> dke_units(const dke::DkeResult& dke) {
  std::vector<mlm::PretrainUnit> out;
  out.reserve(dke.pairs.size());
  for (const auto& p : dke.pairs) out.push_back({p.token, p.segment});
  return out;
}

std::string serialize_dke_pairs(std::span<const dke::DkePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += dke::to_json(p, dke::MaskKind::token).dump();
    out += '\n';
    out += dke::to_json(p, dke::MaskKind::segment).dump();
    out += '\n';
  }
  return out;
}

std::vector<mlm::PretrainUnit> read_dke_units(std::istream& in, nlohmann::json* header) {
  std::vector<mlm::PretrainUnit> out;
  std::optional<std::pair<std::string, dke::MaskedExample>> pending;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line);
    if (is_header_record(j)) {
      if (header) *header = j.at("_header");
      continue;
    }
    auto fail = [&](const std::string& msg) {
      throw corpus::RecordError("dke line " + std::to_string(line_no) + ": " + msg);
    };
    std::string item_id = j.at("item_id").get<std::string>();
    dke::MaskedExample ex = dke::masked_example_from_json(j);
    if (ex.kind == dke::MaskKind::token) {
      if (pending) fail("token view of '" + pending->first + "' has no segment view");
      pending.emplace(std::move(item_id), std::move(ex));
    } else {
      if (!pending || pending->first != item_id) fail("segment view without a token view");
      out.push_back({std::move(pending->second), std::move(ex)});
      pending.reset();
    }
  }
  if (pending) throw corpus::RecordError("dke: trailing token view of '" + pending->first + "'");
  return out;
}

std::vector<std::string> icp_texts(std::span<const icp::IcpInstance> instances) {
  std::vector<std::string> out;
  for (const auto& i : instances) out.push_back(i.text);
  return out;
}

std::vector<std::string> rcd_texts(std::span<const rcd::RcdInstance> instances) {
  std::vector<std::string> out;
  for (const auto& i : instances) out.push_back(i.text);
  return out;
}

std::vector<metrics::EvalRecord> score_triples(const mlm::TrainableMlm& model,
                                               const dke::Vocab& vocab,
                                               const mlm::RelevancePrompt& prompt,
                                               std::span<const corpus::LabeledTriple> triples,
                                               const corpus::Catalog& catalog,
                                               std::size_t* skipped) {
  const auto v = mlm::verbalizer_ids(prompt, vocab);
  std::vector<metrics::EvalRecord> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    auto it = catalog.find(t.item_id);
    if (it == catalog.end()) {
      if (skipped) ++*skipped;
      continue;
    }
    auto r = mlm::relevance_from_example(model, mlm::pet_render(prompt, vocab, t.query, it->second), v);
    out.push_back(metrics::make_record(t.query, r.score, t.label));
  }
  return out;
}

}  // namespace forge::pipeline
