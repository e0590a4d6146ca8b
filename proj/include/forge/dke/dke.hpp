#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/dke/vocab.hpp"
#include "forge/util/rng.hpp"

namespace forge::dke {

inline constexpr int kIgnoreLabel = -100;

struct PieceSpan {
  int segment_id = 0;
  std::size_t start = 0;  // first content token (after <|startofpiece|>)
  std::size_t end = 0;    // one past the last content token
  bool operator==(const PieceSpan&) const = default;
};

/// Queries and item fields laid out as <sop>piece<eop> runs sharing one
/// position space. Segment 0 marks separators; queries take 1..k and item
/// fields k+1..k+m.
struct JointSequence {
  std::vector<TokenId> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::vector<PieceSpan> piece_spans;
  std::size_t query_pieces = 0;
  bool truncated = false;

  std::size_t size() const { return token_ids.size(); }
};

struct AssembleOptions {
  std::size_t max_length = 512;
  std::size_t max_queries = 5;
  bool allow_no_queries = false;
};

/// Throws std::invalid_argument on an empty query, a field-less item, or a
/// query count outside [1, max_queries] (0 allowed with allow_no_queries).
/// Whole trailing pieces are dropped to respect max_length.
JointSequence assemble_joint_sequence(const std::vector<std::string>& queries,
                                      const corpus::ItemDoc& item, const Vocab& vocab,
                                      const AssembleOptions& opts = {});

/// A single-segment sequence (segment 1, no separators) for ICP/RCD text.
JointSequence plain_sequence(std::string_view text, const Vocab& vocab,
                             std::size_t max_length = 512);

enum class MaskKind { token, segment };
std::string_view to_string(MaskKind kind);

struct MaskedExample {
  std::vector<TokenId> input_ids;
  std::vector<int> labels;  // original id at masked positions, kIgnoreLabel elsewhere
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::vector<std::size_t> masked_positions;  // ascending
  MaskKind kind = MaskKind::token;

  bool operator==(const MaskedExample&) const = default;
};

struct MaskConfig {
  double token_mask_rate = 0.15;
  double replace_mask_prob = 0.8;
  double replace_random_prob = 0.1;
  double keep_prob = 0.1;
  std::uint64_t rng_seed = 42;

  void validate() const;
};

/// Bernoulli selection of maskable positions with 80/10/10 replacement; at
/// least one position is always masked. Throws if nothing is maskable.
MaskedExample apply_token_mask(const JointSequence& seq, const MaskConfig& cfg, Rng& rng,
                               std::size_t vocab_size);

/// Masks every token of one uniformly chosen piece.
MaskedExample apply_segment_mask(const JointSequence& seq, Rng& rng);

struct DkePair {
  std::string item_id;
  MaskedExample token;
  MaskedExample segment;
};

struct DkeStats {
  std::size_t items = 0;
  std::size_t item_only = 0;
  std::size_t truncated = 0;
};

struct DkeResult {
  std::vector<DkePair> pairs;  // ordered by (epoch, item_id)
  DkeStats stats;
};

/// Per-item RNG seed: independent of processing order.
std::uint64_t item_seed(std::uint64_t seed, std::string_view item_id, std::uint64_t stream);

/// One token-masked and one segment-masked view per item per epoch, using
/// the item's top-k queries (clicks-descending) from the I2Q mapping.
DkeResult emit_dke_examples(const corpus::Catalog& catalog,
                            const std::map<std::string, corpus::CandidateSet, std::less<>>& i2q,
                            const Vocab& vocab, std::size_t k, const MaskConfig& cfg,
                            std::size_t epochs = 1, std::size_t jobs = 1);

nlohmann::ordered_json to_json(const DkePair& pair, MaskKind kind);
MaskedExample masked_example_from_json(const nlohmann::json& j);

}  // namespace forge::dke
