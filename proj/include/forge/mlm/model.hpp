#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "forge/dke/dke.hpp"

namespace forge::mlm {

using dke::MaskedExample;
using dke::TokenId;

/// Applied elementwise to the context vector. quadratic (x + x^2) carries
/// pairwise token interactions, which relevance needs; identity and tanh
/// (odd) have no second-order cross terms.
enum class Activation { identity, tanh, quadratic };
std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t max_segments = 64;
  Activation activation = Activation::quadratic;
  double init_scale = 0.1;
  std::uint64_t seed = 42;
};

enum class Block { embedding, output, bias, segment };
inline constexpr std::array<Block, 4> kAllBlocks = {Block::embedding, Block::output, Block::bias,
                                                    Block::segment};

/// Bag-of-context masked LM. Every masked position shares one context
/// vector: the mean of E[token] + S[segment] over the visible, non-separator
/// positions. Logits are W·act(context) + b.
///
/// E and W are stored row-per-token (|V| x d); S is max_segments x d.
class TrainableMlm {
 public:
  TrainableMlm(std::size_t vocab_size, const ModelConfig& cfg);

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t dim() const { return cfg_.dim; }
  std::size_t max_segments() const { return cfg_.max_segments; }
  const ModelConfig& config() const { return cfg_; }

  std::span<double> block(Block b);
  std::span<const double> block(Block b) const;

  std::span<const double> embedding(TokenId t) const { return row(E_, t); }
  std::span<const double> output(TokenId t) const { return row(W_, t); }
  std::span<const double> segment(int s) const { return row(S_, segment_row(s)); }
  std::span<double> embedding(TokenId t) { return row(E_, t); }
  std::span<double> output(TokenId t) { return row(W_, t); }
  std::span<double> segment(int s) { return row(S_, segment_row(s)); }
  double bias(TokenId t) const { return b_[static_cast<std::size_t>(t)]; }
  double& bias(TokenId t) { return b_[static_cast<std::size_t>(t)]; }

  /// Segment ids beyond the table share the last row.
  std::size_t segment_row(int s) const;

  bool all_finite() const;

 private:
  std::span<double> row(std::vector<double>& m, std::size_t r) {
    return {m.data() + r * cfg_.dim, cfg_.dim};
  }
  std::span<const double> row(const std::vector<double>& m, std::size_t r) const {
    return {m.data() + r * cfg_.dim, cfg_.dim};
  }
  std::span<double> row(std::vector<double>& m, TokenId t) {
    return row(m, static_cast<std::size_t>(t));
  }
  std::span<const double> row(const std::vector<double>& m, TokenId t) const {
    return row(m, static_cast<std::size_t>(t));
  }

  std::size_t vocab_size_;
  ModelConfig cfg_;
  std::vector<double> E_, W_, b_, S_;
};

/// Dense gradient buffers with touched-row tracking so sparse updates stay
/// cheap on large vocabularies. Reuse one instance across steps.
class Gradients {
 public:
  explicit Gradients(const TrainableMlm& model);

  std::span<double> embedding(TokenId t);
  std::span<double> output(TokenId t);
  std::span<double> segment(std::size_t row);
  double& bias(TokenId t);

  double value(Block b, std::size_t index) const;

  void clear();
  void scale(double factor);
  bool all_finite() const;
  /// params -= lr * grad over touched rows.
  void apply(TrainableMlm& model, double lr) const;
  /// fn(block, flat offset, gradient) for every touched row; bias entries
  /// arrive as one-element rows.
  template <class Fn>
  void for_each_row(Fn&& fn) const {
    for (std::size_t r : e_rows_) fn(Block::embedding, r * dim_, std::span<const double>(E_.data() + r * dim_, dim_));
    for (std::size_t r : w_rows_) {
      fn(Block::output, r * dim_, std::span<const double>(W_.data() + r * dim_, dim_));
      fn(Block::bias, r, std::span<const double>(b_.data() + r, 1));
    }
    for (std::size_t r : s_rows_) fn(Block::segment, r * dim_, std::span<const double>(S_.data() + r * dim_, dim_));
  }

 private:
  std::span<double> touch(std::vector<double>& m, std::vector<char>& flags,
                          std::vector<std::size_t>& rows, std::size_t r);

  std::size_t dim_;
  std::vector<double> E_, W_, b_, S_;
  std::vector<char> e_touched_, w_touched_, s_touched_;
  std::vector<std::size_t> e_rows_, w_rows_, s_rows_;
};

struct ForwardPass {
  std::vector<std::size_t> context_positions;
  std::vector<double> context;
  std::vector<double> hidden;
  bool empty_context = false;
};

/// Context and hidden vectors; `masked` lists excluded positions.
ForwardPass encode_context(const TrainableMlm& model, std::span<const TokenId> input_ids,
                           std::span<const int> segment_ids,
                           std::span<const std::size_t> masked);

double logit(const TrainableMlm& model, const ForwardPass& fp, TokenId v);
/// Softmax over the whole vocabulary; uniform when the context is empty.
std::vector<double> distribution(const TrainableMlm& model, const ForwardPass& fp);

/// One distribution per masked position (they coincide in this model).
std::vector<std::vector<double>> forward_logits(const TrainableMlm& model, const MaskedExample& ex);

/// Propagates dL/dlogits (given for a subset of tokens) into `grads`, scaled
/// by weight.
void backward(const TrainableMlm& model, const ForwardPass& fp, std::span<const TokenId> input_ids,
              std::span<const int> segment_ids, std::span<const std::pair<TokenId, double>> dlogits,
              double weight, Gradients& grads);

/// Number of forward passes that hit an empty context (all tokens masked).
std::size_t empty_context_events();

/// Mean over masked positions of -log p(label).
double masked_ce_loss(const TrainableMlm& model, const MaskedExample& ex);
double masked_ce_loss_and_grad(const TrainableMlm& model, const MaskedExample& ex, double weight,
                               Gradients& grads);

struct MixedLossConfig {
  double alpha = 0.7;
  void validate() const;
};

/// alpha * L_token + (1 - alpha) * L_segment. Throws std::invalid_argument if
/// the example kinds are swapped.
double mixed_loss(const TrainableMlm& model, const MaskedExample& token_ex,
                  const MaskedExample& segment_ex, const MixedLossConfig& cfg);
double mixed_loss_and_grad(const TrainableMlm& model, const MaskedExample& token_ex,
                           const MaskedExample& segment_ex, const MixedLossConfig& cfg,
                           double weight, Gradients& grads);

}  // namespace forge::mlm
