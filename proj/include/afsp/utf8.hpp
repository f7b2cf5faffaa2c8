#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace afsp::utf8 {

/// Decodes UTF-8 into codepoints. Invalid byte sequences decode to U+FFFD
/// (one replacement per offending byte) so the function is total.
std::u32string decode(std::string_view text);

/// Encodes codepoints back to UTF-8. Invalid scalar values encode as U+FFFD.
std::string encode(const std::u32string& codepoints);

void append(std::string& out, char32_t cp);

/// Number of codepoints in a UTF-8 string.
std::size_t length(std::string_view text);

} // namespace afsp::utf8
