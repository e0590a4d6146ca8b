#include "forge/embed/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "forge/util/digest.hpp"
#include "forge/util/unicode.hpp"

namespace forge::embed {

void EmbedderConfig::validate() const {
  if (dimension < 8) throw std::invalid_argument("embedder dimension must be >= 8");
  if (ngram_min < 1 || ngram_min > ngram_max) {
    throw std::invalid_argument("embedder n-gram bounds must satisfy 1 <= min <= max");
  }
}

std::vector<std::string> char_ngrams(std::string_view text, std::size_t ngram_min,
                                     std::size_t ngram_max) {
  const std::u32string cps = unicode::decode(text);
  std::vector<std::string> grams;
  for (std::size_t n = ngram_min; n <= ngram_max; ++n) {
    if (cps.size() < n) break;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      grams.push_back(unicode::encode(std::u32string_view(cps).substr(i, n)));
    }
  }
  return grams;
}

HashedNgramEncoder::HashedNgramEncoder(EmbedderConfig config) : config_(config) {
  config_.validate();
}

Vector HashedNgramEncoder::embed(std::string_view text) const {
  Vector v(config_.dimension, 0.0);
  for (const auto& gram : char_ngrams(text, config_.ngram_min, config_.ngram_max)) {
    const std::uint64_t h = stable_hash64(gram, config_.hash_seed);
    const std::size_t bucket = static_cast<std::size_t>(h % config_.dimension);
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  const double norm = l2_norm(v);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

Vector embed_text(const EmbedderConfig& config, std::string_view text) {
  return HashedNgramEncoder(config).embed(text);
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_sim: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace forge::embed
