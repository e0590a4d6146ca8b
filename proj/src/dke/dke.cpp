#include "forge/dke/dke.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "forge/util/digest.hpp"
#include "forge/util/parallel.hpp"

namespace forge::dke {

namespace {

struct Piece {
  std::vector<TokenId> ids;
  int segment = 0;
};

JointSequence layout(const std::vector<Piece>& pieces, std::size_t max_length,
                     bool* truncated) {
  JointSequence seq;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const auto& piece = pieces[p];
    std::size_t n = piece.ids.size();
    if (seq.size() + n + 2 > max_length) {
      if (truncated) *truncated = true;
      if (p != 0) break;
      // A lone first piece longer than the whole window is clipped.
      n = max_length >= 2 ? max_length - 2 : 0;
    }
    seq.token_ids.push_back(Vocab::kStartOfPiece);
    seq.segment_ids.push_back(0);
    const std::size_t start = seq.size();
    for (std::size_t i = 0; i < n; ++i) {
      seq.token_ids.push_back(piece.ids[i]);
      seq.segment_ids.push_back(piece.segment);
    }
    seq.piece_spans.push_back({piece.segment, start, seq.size()});
    seq.token_ids.push_back(Vocab::kEndOfPiece);
    seq.segment_ids.push_back(0);
  }
  seq.position_ids.resize(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) seq.position_ids[i] = static_cast<int>(i);
  return seq;
}

}  // namespace

JointSequence assemble_joint_sequence(const std::vector<std::string>& queries,
                                      const corpus::ItemDoc& item, const Vocab& vocab,
                                      const AssembleOptions& opts) {
  if (queries.size() > opts.max_queries || (queries.empty() && !opts.allow_no_queries)) {
    throw std::invalid_argument("assemble_joint_sequence: expected 1.." +
                                std::to_string(opts.max_queries) + " queries, got " +
                                std::to_string(queries.size()));
  }
  if (item.fields.empty()) throw std::invalid_argument("assemble_joint_sequence: item has no fields");

  std::vector<Piece> pieces;
  int segment = 1;
  for (const auto& q : queries) {
    auto ids = vocab.encode(q);
    if (ids.empty()) throw std::invalid_argument("assemble_joint_sequence: empty query");
    pieces.push_back({std::move(ids), segment++});
  }
  for (const auto& [name, value] : item.fields) {
    pieces.push_back({vocab.encode(name + ": " + value), segment++});
  }
  bool truncated = false;
  JointSequence seq = layout(pieces, opts.max_length, &truncated);
  seq.truncated = truncated;
  seq.query_pieces = std::min(queries.size(), seq.piece_spans.size());
  return seq;
}

JointSequence plain_sequence(std::string_view text, const Vocab& vocab, std::size_t max_length) {
  JointSequence seq;
  auto ids = vocab.encode(text);
  if (ids.size() > max_length) {
    ids.resize(max_length);
    seq.truncated = true;
  }
  seq.token_ids = ids;
  seq.segment_ids.assign(ids.size(), 1);
  seq.position_ids.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) seq.position_ids[i] = static_cast<int>(i);
  seq.piece_spans.push_back({1, 0, ids.size()});
  return seq;
}

std::string_view to_string(MaskKind kind) { return kind == MaskKind::token ? "token" : "segment"; }

void MaskConfig::validate() const {
  if (!(token_mask_rate > 0.0 && token_mask_rate <= 1.0)) {
    throw std::invalid_argument("token_mask_rate must lie in (0, 1]");
  }
  if (replace_mask_prob < 0 || replace_random_prob < 0 || keep_prob < 0 ||
      std::abs(replace_mask_prob + replace_random_prob + keep_prob - 1.0) > 1e-9) {
    throw std::invalid_argument("mask replacement probabilities must be >= 0 and sum to 1");
  }
}

namespace {
MaskedExample blank_example(const JointSequence& seq, MaskKind kind) {
  MaskedExample ex;
  ex.input_ids = seq.token_ids;
  ex.labels.assign(seq.size(), kIgnoreLabel);
  ex.segment_ids = seq.segment_ids;
  ex.position_ids = seq.position_ids;
  ex.kind = kind;
  return ex;
}

bool maskable(TokenId id) { return id != Vocab::kPad && !Vocab::is_separator(id); }
}  // namespace

MaskedExample apply_token_mask(const JointSequence& seq, const MaskConfig& cfg, Rng& rng,
                               std::size_t vocab_size) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (maskable(seq.token_ids[i])) candidates.push_back(i);
  }
  if (candidates.empty()) throw std::invalid_argument("apply_token_mask: no maskable tokens");

  MaskedExample ex = blank_example(seq, MaskKind::token);
  for (std::size_t pos : candidates) {
    if (rng.uniform01() < cfg.token_mask_rate) ex.masked_positions.push_back(pos);
  }
  if (ex.masked_positions.empty()) {
    ex.masked_positions.push_back(candidates[rng.index(candidates.size())]);
  }
  const std::size_t n_ordinary =
      vocab_size > static_cast<std::size_t>(Vocab::kNumReserved) ? vocab_size - Vocab::kNumReserved : 0;
  for (std::size_t pos : ex.masked_positions) {
    ex.labels[pos] = seq.token_ids[pos];
    const double r = rng.uniform01();
    if (r < cfg.replace_mask_prob) {
      ex.input_ids[pos] = Vocab::kMask;
    } else if (r < cfg.replace_mask_prob + cfg.replace_random_prob) {
      ex.input_ids[pos] = n_ordinary == 0
                              ? Vocab::kMask
                              : static_cast<TokenId>(Vocab::kNumReserved + rng.index(n_ordinary));
    }
  }
  return ex;
}

MaskedExample apply_segment_mask(const JointSequence& seq, Rng& rng) {
  if (seq.piece_spans.empty()) throw std::invalid_argument("apply_segment_mask: no pieces");
  const PieceSpan& span = seq.piece_spans[rng.index(seq.piece_spans.size())];
  MaskedExample ex = blank_example(seq, MaskKind::segment);
  for (std::size_t pos = span.start; pos < span.end; ++pos) {
    ex.masked_positions.push_back(pos);
    ex.labels[pos] = seq.token_ids[pos];
    ex.input_ids[pos] = Vocab::kMask;
  }
  return ex;
}

std::uint64_t item_seed(std::uint64_t seed, std::string_view item_id, std::uint64_t stream) {
  return splitmix64((seed ^ stable_hash64(item_id)) + splitmix64(stream + 1));
}

DkeResult emit_dke_examples(const corpus::Catalog& catalog,
                            const std::map<std::string, corpus::CandidateSet, std::less<>>& i2q,
                            const Vocab& vocab, std::size_t k, const MaskConfig& cfg,
                            std::size_t epochs, std::size_t jobs) {
  cfg.validate();
  std::vector<const corpus::ItemDoc*> items;
  for (const auto& [_, item] : catalog) items.push_back(&item);

  AssembleOptions opts;
  opts.max_queries = std::max<std::size_t>(k, 1);
  opts.allow_no_queries = true;

  DkeResult result;
  result.stats.items = items.size();
  std::vector<std::vector<std::string>> queries(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto it = i2q.find(items[i]->item_id);
    if (it != i2q.end()) {
      for (const auto& c : it->second.candidates) {
        if (queries[i].size() >= k) break;
        queries[i].push_back(c.id);
      }
    }
    if (queries[i].empty()) ++result.stats.item_only;
  }

  std::vector<JointSequence> sequences(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    sequences[i] = assemble_joint_sequence(queries[i], *items[i], vocab, opts);
    if (sequences[i].truncated) ++result.stats.truncated;
  }

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<DkePair> pairs(items.size());
    parallel_for(items.size(), jobs, [&](std::size_t i) {
      const auto& id = items[i]->item_id;
      Rng tok_rng(item_seed(cfg.rng_seed, id, 2 * epoch));
      Rng seg_rng(item_seed(cfg.rng_seed, id, 2 * epoch + 1));
      pairs[i] = {id, apply_token_mask(sequences[i], cfg, tok_rng, vocab.size()),
                  apply_segment_mask(sequences[i], seg_rng)};
    });
    for (auto& p : pairs) result.pairs.push_back(std::move(p));
  }
  return result;
}

nlohmann::ordered_json to_json(const DkePair& pair, MaskKind kind) {
  const MaskedExample& ex = kind == MaskKind::token ? pair.token : pair.segment;
  nlohmann::ordered_json j;
  j["item_id"] = pair.item_id;
  j["input_ids"] = ex.input_ids;
  j["labels"] = ex.labels;
  j["segment_ids"] = ex.segment_ids;
  j["position_ids"] = ex.position_ids;
  j["mask_kind"] = to_string(ex.kind);
  return j;
}

MaskedExample masked_example_from_json(const nlohmann::json& j) {
  MaskedExample ex;
  ex.input_ids = j.at("input_ids").get<std::vector<TokenId>>();
  ex.labels = j.at("labels").get<std::vector<int>>();
  ex.segment_ids = j.at("segment_ids").get<std::vector<int>>();
  ex.position_ids = j.at("position_ids").get<std::vector<int>>();
  ex.kind = j.at("mask_kind").get<std::string>() == "segment" ? MaskKind::segment : MaskKind::token;
  const std::size_t n = ex.input_ids.size();
  if (ex.labels.size() != n || ex.segment_ids.size() != n || ex.position_ids.size() != n) {
    throw std::invalid_argument("masked example arrays differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ex.labels[i] != kIgnoreLabel) ex.masked_positions.push_back(i);
  }
  if (ex.masked_positions.empty()) throw std::invalid_argument("masked example has no labels");
  return ex;
}

}  // namespace forge::dke
