#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/dke/dke.hpp"
#include "forge/icp/icp.hpp"
#include "forge/metrics/metrics.hpp"
#include "forge/mlm/relevance.hpp"
#include "forge/mlm/training.hpp"
#include "forge/rcd/rcd.hpp"

namespace forge::pipeline {

/// Words that appear in generated pretraining text regardless of the data:
/// ICP and RCD template text plus the relevance prompt.
std::vector<std::string> fixed_vocab_text(const icp::IcpTemplate& icp_tmpl,
                                          const mlm::RelevancePrompt& prompt);

/// Every text that can reach the model: "name: value" item fields, queries,
/// pretraining documents and the fixed template text.
std::vector<std::string> vocab_corpus(const corpus::Catalog& catalog,
                                      std::span<const corpus::ClickRecord> clicks,
                                      std::span<const std::string> documents,
                                      const icp::IcpTemplate& icp_tmpl,
                                      const mlm::RelevancePrompt& prompt);

/// Token-masked single-segment units, one per text per epoch. Masks are
/// seeded per (text index, epoch) so the result does not depend on order.
std::vector<mlm::PretrainUnit> text_units(std::span<const std::string> texts,
                                          const dke::Vocab& vocab, const dke::MaskConfig& mask,
                                          std::size_t epochs, std::uint64_t stream);

std::vector<mlm::PretrainUnit> dke_units(const dke::DkeResult& dke);

/// dke.jsonl body: a token-masked line followed by the segment-masked line
/// of the same pair.
std::string serialize_dke_pairs(std::span<const dke::DkePair> pairs);
/// Inverse of serialize_dke_pairs; the header line (if any) is skipped and
/// its contents returned through *header.
std::vector<mlm::PretrainUnit> read_dke_units(std::istream& in,
                                              nlohmann::json* header = nullptr);

std::vector<std::string> icp_texts(std::span<const icp::IcpInstance> instances);
std::vector<std::string> rcd_texts(std::span<const rcd::RcdInstance> instances);

/// Scores every triple whose item resolves; unresolved ones are counted.
std::vector<metrics::EvalRecord> score_triples(const mlm::TrainableMlm& model,
                                               const dke::Vocab& vocab,
                                               const mlm::RelevancePrompt& prompt,
                                               std::span<const corpus::LabeledTriple> triples,
                                               const corpus::Catalog& catalog,
                                               std::size_t* skipped = nullptr);

}  // namespace forge::pipeline
