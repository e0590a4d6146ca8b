#include "forge/dke/vocab.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "forge/util/digest.hpp"
#include "forge/util/unicode.hpp"

namespace forge::dke {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_space(cp)) {
      flush();
    } else if (unicode::is_cjk(cp) || unicode::is_ascii_punct(cp)) {
      flush();
      std::string single;
      unicode::append_utf8(single, cp);
      out.push_back(std::move(single));
    } else {
      unicode::append_utf8(current, cp);
    }
  }
  flush();
  return out;
}

namespace {
std::vector<std::string> reserved_tokens() {
  return {std::string(Vocab::kPadToken), std::string(Vocab::kUnkToken),
          std::string(Vocab::kMaskToken), std::string(Vocab::kStartOfPieceToken),
          std::string(Vocab::kEndOfPieceToken)};
}
}  // namespace

Vocab::Vocab() : Vocab(from_tokens(reserved_tokens())) {}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  const auto reserved = reserved_tokens();
  if (tokens.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw std::invalid_argument("vocab must start with the reserved tokens");
  }
  Vocab v{RawTag{}};
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    auto [_, inserted] = v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw std::invalid_argument("duplicate vocab token: " + v.tokens_[i]);
  }
  return v;
}

Vocab Vocab::build(const std::vector<std::string>& texts, std::size_t min_count,
                   std::size_t max_size, const std::vector<std::string>& required) {
  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) ++counts[tok];
  }
  auto tokens = reserved_tokens();
  for (const auto& r : tokens) counts.erase(r);

  std::map<std::string, std::size_t, std::less<>> must;
  for (const auto& req : required) {
    if (std::find(tokens.begin(), tokens.end(), req) != tokens.end()) continue;
    auto it = counts.find(req);
    must.emplace(req, it == counts.end() ? 0 : it->second);
  }

  auto by_rank = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& entry : counts) {
    if (entry.second >= min_count && !must.count(entry.first)) ranked.push_back(entry);
  }
  std::sort(ranked.begin(), ranked.end(), by_rank);
  if (max_size != 0) {
    const std::size_t fixed = tokens.size() + must.size();
    ranked.resize(std::min(ranked.size(), max_size > fixed ? max_size - fixed : 0));
  }
  ranked.insert(ranked.end(), must.begin(), must.end());
  std::sort(ranked.begin(), ranked.end(), by_rank);
  for (auto& [tok, _] : ranked) tokens.push_back(std::move(tok));
  return from_tokens(std::move(tokens));
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::digest() const { return sha256_hex(serialize()); }

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out.append(t);
    out.push_back('\n');
  }
  return out;
}

Vocab Vocab::parse(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    tokens.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return from_tokens(std::move(tokens));
}

}  // namespace forge::dke
