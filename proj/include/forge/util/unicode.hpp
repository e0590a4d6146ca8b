#pragma once

#include <string>
#include <string_view>

namespace forge::unicode {

/// Decodes UTF-8; malformed sequences decode to U+FFFD.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

std::size_t codepoint_count(std::string_view utf8);

std::string to_nfc(std::string_view utf8);

bool is_space(char32_t cp);
/// CJK ideographs, kana, hangul and fullwidth forms: tokenized per character.
bool is_cjk(char32_t cp);
bool is_ascii_punct(char32_t cp);

}  // namespace forge::unicode
