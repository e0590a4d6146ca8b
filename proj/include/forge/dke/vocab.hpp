#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace forge::dke {

using TokenId = std::int32_t;

/// Whitespace split for space-delimited scripts; CJK codepoints and ASCII
/// punctuation become single-character tokens.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kMask = 2;
  static constexpr TokenId kStartOfPiece = 3;
  static constexpr TokenId kEndOfPiece = 4;
  static constexpr TokenId kNumReserved = 5;

  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kUnkToken = "[UNK]";
  static constexpr std::string_view kMaskToken = "[MASK]";
  static constexpr std::string_view kStartOfPieceToken = "<|startofpiece|>";
  static constexpr std::string_view kEndOfPieceToken = "<|endofpiece|>";

  Vocab();

  /// Tokens ordered by corpus frequency descending, then lexicographically.
  /// `required` tokens are always included. max_size == 0 means unbounded.
  static Vocab build(const std::vector<std::string>& texts, std::size_t min_count = 1,
                     std::size_t max_size = 0, const std::vector<std::string>& required = {});

  /// Rebuilds from an explicit token list; the first kNumReserved entries
  /// must be the reserved tokens in id order.
  static Vocab from_tokens(std::vector<std::string> tokens);

  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_special(TokenId id) { return id >= 0 && id < kNumReserved; }
  static bool is_separator(TokenId id) { return id == kStartOfPiece || id == kEndOfPiece; }

  std::vector<TokenId> encode(std::string_view text) const;

  /// SHA-256 over the token list; pins checkpoints and DKE artifacts to a vocab.
  std::string digest() const;

  std::string serialize() const;  // one token per line
  static Vocab parse(std::string_view text);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  struct RawTag {};
  explicit Vocab(RawTag) {}

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace forge::dke
