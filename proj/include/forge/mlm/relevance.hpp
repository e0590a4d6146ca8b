#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/dke/vocab.hpp"
#include "forge/mlm/model.hpp"

namespace forge::mlm {

/// Cloze prompt with {Q} and {I} slots and one [MASK]; the masked position
/// is read through the (negative, positive) verbalizer tokens.
struct RelevancePrompt {
  std::string tmpl = "Is {Q} and {I} related? [MASK]";
  std::string negative = "no";
  std::string positive = "yes";

  /// Throws std::invalid_argument unless {Q}, {I} and [MASK] each occur once.
  void validate() const;
  /// Additionally requires both verbalizers to be in the vocabulary.
  void validate(const dke::Vocab& vocab) const;
  /// Template words and verbalizers, for vocabulary construction.
  std::vector<std::string> vocabulary_text() const;
};

/// Prompt text with slots filled; the item renders as item_text().
std::string pet_text(const RelevancePrompt& prompt, std::string_view query,
                     const corpus::ItemDoc& item);

/// Tokenized prompt with exactly one masked position at the [MASK] slot.
/// Query tokens and template words are segment 1, item tokens segment 2.
/// The label is the verbalizer id when `label` is given, else ignored.
MaskedExample pet_render(const RelevancePrompt& prompt, const dke::Vocab& vocab,
                         std::string_view query, const corpus::ItemDoc& item,
                         std::optional<int> label = std::nullopt);

struct Verbalizers {
  TokenId negative;
  TokenId positive;
};
Verbalizers verbalizer_ids(const RelevancePrompt& prompt, const dke::Vocab& vocab);

struct Relevance {
  double score = 0.5;
  int label = 1;
};

/// Two-way renormalized verbalizer probability; label = score >= 0.5.
Relevance relevance_from_example(const TrainableMlm& model, const MaskedExample& ex,
                                 Verbalizers verbalizers);
Relevance relevance_score(const TrainableMlm& model, const dke::Vocab& vocab,
                          const RelevancePrompt& prompt, std::string_view query,
                          const corpus::ItemDoc& item);

/// Binary cross-entropy of the two-way verbalizer distribution against
/// label; accumulates weight * gradient when grads is non-null.
double verbalizer_ce_loss(const TrainableMlm& model, const MaskedExample& ex, Verbalizers v,
                          int label, double weight = 1.0, Gradients* grads = nullptr);

}  // namespace forge::mlm
