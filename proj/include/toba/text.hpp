#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace toba::text {

// Offset of the first byte that does not start a well-formed UTF-8 sequence
// (overlongs, surrogates and values above U+10FFFF are rejected).
std::optional<std::size_t> find_invalid_utf8(std::string_view s);

// Splits valid UTF-8 into one string per code point.
std::vector<std::string> code_points(std::string_view s);

// Decodes valid UTF-8 into code points.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

// NFC normalization. Input must be valid UTF-8.
std::string nfc(std::string_view s);

// Full lowercase mapping (root locale).
std::string lowercase(std::string_view s);

bool is_whitespace(char32_t cp);
bool is_alphabetic(char32_t cp);
bool is_control(char32_t cp);
bool is_digit(char32_t cp);

}  // namespace toba::text
