#include "forge/mlm/relevance.hpp"

#include <cmath>
#include <stdexcept>

#include "forge/util/text.hpp"

namespace forge::mlm {

using dke::Vocab;

namespace {
constexpr std::string_view kMaskSlot = "[MASK]";
constexpr std::string_view kQuerySlot = "{Q}";
constexpr std::string_view kItemSlot = "{I}";

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
}  // namespace

void RelevancePrompt::validate() const {
  for (auto slot : {kQuerySlot, kItemSlot, kMaskSlot}) {
    if (count_occurrences(tmpl, slot) != 1) {
      throw std::invalid_argument("relevance prompt must contain " + std::string(slot) +
                                  " exactly once: \"" + tmpl + "\"");
    }
  }
  if (negative.empty() || positive.empty() || negative == positive) {
    throw std::invalid_argument("verbalizers must be two distinct non-empty tokens");
  }
}

void RelevancePrompt::validate(const Vocab& vocab) const {
  validate();
  for (const auto& v : {negative, positive}) {
    if (!vocab.contains(v)) throw std::invalid_argument("verbalizer '" + v + "' not in vocabulary");
  }
}

std::vector<std::string> RelevancePrompt::vocabulary_text() const {
  std::string bare = tmpl;
  for (auto slot : {kQuerySlot, kItemSlot, kMaskSlot}) {
    auto pos = bare.find(slot);
    if (pos != std::string::npos) bare.replace(pos, slot.size(), " ");
  }
  return {bare, negative, positive};
}

std::string pet_text(const RelevancePrompt& prompt, std::string_view query,
                     const corpus::ItemDoc& item) {
  prompt.validate();
  std::string out = prompt.tmpl;
  const std::string item_str = corpus::item_text(item);
  // Substitute in one left-to-right pass so slot-like text in values is inert.
  std::string result;
  std::size_t i = 0;
  while (i < out.size()) {
    if (out.compare(i, kQuerySlot.size(), kQuerySlot) == 0) {
      result.append(query);
      i += kQuerySlot.size();
    } else if (out.compare(i, kItemSlot.size(), kItemSlot) == 0) {
      result.append(item_str);
      i += kItemSlot.size();
    } else {
      result.push_back(out[i++]);
    }
  }
  return result;
}

MaskedExample pet_render(const RelevancePrompt& prompt, const Vocab& vocab,
                         std::string_view query, const corpus::ItemDoc& item,
                         std::optional<int> label) {
  prompt.validate();
  if (query.empty()) throw std::invalid_argument("pet_render: empty query");
  const std::string item_str = corpus::item_text(item);

  MaskedExample ex;
  ex.kind = dke::MaskKind::token;
  auto append = [&](std::string_view text, int segment) {
    for (TokenId t : vocab.encode(text)) {
      ex.input_ids.push_back(t);
      ex.segment_ids.push_back(segment);
    }
  };
  const std::string_view tmpl = prompt.tmpl;
  std::size_t i = 0, literal_start = 0;
  auto flush_literal = [&](std::size_t end) {
    if (end > literal_start) append(tmpl.substr(literal_start, end - literal_start), 1);
  };
  while (i < tmpl.size()) {
    if (tmpl.compare(i, kQuerySlot.size(), kQuerySlot) == 0) {
      flush_literal(i);
      append(query, 1);
      i += kQuerySlot.size();
      literal_start = i;
    } else if (tmpl.compare(i, kItemSlot.size(), kItemSlot) == 0) {
      flush_literal(i);
      append(item_str, 2);
      i += kItemSlot.size();
      literal_start = i;
    } else if (tmpl.compare(i, kMaskSlot.size(), kMaskSlot) == 0) {
      flush_literal(i);
      ex.masked_positions.push_back(ex.input_ids.size());
      ex.input_ids.push_back(Vocab::kMask);
      ex.segment_ids.push_back(1);
      i += kMaskSlot.size();
      literal_start = i;
    } else {
      ++i;
    }
  }
  flush_literal(tmpl.size());

  ex.labels.assign(ex.input_ids.size(), dke::kIgnoreLabel);
  ex.position_ids.resize(ex.input_ids.size());
  for (std::size_t p = 0; p < ex.position_ids.size(); ++p) ex.position_ids[p] = static_cast<int>(p);
  if (label) {
    if (*label != 0 && *label != 1) throw std::invalid_argument("pet_render: label must be 0 or 1");
    ex.labels[ex.masked_positions.front()] =
        vocab.id(*label == 1 ? prompt.positive : prompt.negative);
  }
  return ex;
}

Verbalizers verbalizer_ids(const RelevancePrompt& prompt, const Vocab& vocab) {
  prompt.validate(vocab);
  return {vocab.id(prompt.negative), vocab.id(prompt.positive)};
}

Relevance relevance_from_example(const TrainableMlm& model, const MaskedExample& ex,
                                 Verbalizers verbalizers) {
  ForwardPass fp = encode_context(model, ex.input_ids, ex.segment_ids, ex.masked_positions);
  Relevance r;
  if (!fp.empty_context) {
    const double margin = logit(model, fp, verbalizers.positive) - logit(model, fp, verbalizers.negative);
    r.score = 1.0 / (1.0 + std::exp(-margin));
  }
  r.label = r.score >= 0.5 ? 1 : 0;
  return r;
}

Relevance relevance_score(const TrainableMlm& model, const Vocab& vocab,
                          const RelevancePrompt& prompt, std::string_view query,
                          const corpus::ItemDoc& item) {
  return relevance_from_example(model, pet_render(prompt, vocab, query, item),
                                verbalizer_ids(prompt, vocab));
}

double verbalizer_ce_loss(const TrainableMlm& model, const MaskedExample& ex, Verbalizers v,
                          int label, double weight, Gradients* grads) {
  ForwardPass fp = encode_context(model, ex.input_ids, ex.segment_ids, ex.masked_positions);
  if (fp.empty_context) return std::log(2.0);
  const double margin = logit(model, fp, v.positive) - logit(model, fp, v.negative);
  const double loss = label == 1 ? softplus(-margin) : softplus(margin);
  if (grads) {
    const double p = 1.0 / (1.0 + std::exp(-margin));
    const double g = p - static_cast<double>(label);
    const std::pair<TokenId, double> dl[] = {{v.positive, g}, {v.negative, -g}};
    backward(model, fp, ex.input_ids, ex.segment_ids, dl, weight, *grads);
  }
  return loss;
}

}  // namespace forge::mlm
