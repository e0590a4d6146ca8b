#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forge::embed {

using Vector = std::vector<double>;

struct EmbedderConfig {
  std::size_t dimension = 768;
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 3;
  std::uint64_t hash_seed = 0;

  void validate() const;
};

/// Anything that maps normalized text to a fixed-size vector. The similarity
/// threshold used by ICP screening is calibrated per encoder.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Vector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Signed feature hashing of character n-grams, L2-normalized.
class HashedNgramEncoder final : public TextEncoder {
 public:
  explicit HashedNgramEncoder(EmbedderConfig config);

  Vector embed(std::string_view text) const override;
  std::size_t dimension() const override { return config_.dimension; }
  const EmbedderConfig& config() const { return config_; }

 private:
  EmbedderConfig config_;
};

Vector embed_text(const EmbedderConfig& config, std::string_view text);

/// Character n-grams (as UTF-8 strings) of text within [ngram_min, ngram_max].
std::vector<std::string> char_ngrams(std::string_view text, std::size_t ngram_min,
                                     std::size_t ngram_max);

/// dot(a,b)/(|a||b|); 0.0 when either vector is all zeros. Throws
/// std::invalid_argument on dimension mismatch.
double cosine_sim(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v);

}  // namespace forge::embed
