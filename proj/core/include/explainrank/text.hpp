#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace explainrank {

bool is_valid_utf8(std::string_view s) noexcept;

std::string_view trim(std::string_view s) noexcept;
std::vector<std::string_view> split_lines(std::string_view s);
std::vector<std::string_view> split_whitespace(std::string_view s);

/// Lowercases ASCII letters and splits on every ASCII byte that is not a
/// letter or digit. Bytes >= 0x80 are kept inside terms so UTF-8 words
/// survive intact.
std::vector<std::string> tokenize(std::string_view text);

/// Lowercase, strip punctuation, collapse whitespace. Used to compare seed
/// questions against benchmark queries.
std::string normalize_query(std::string_view text);

/// Decodes named (common subset) and numeric character references.
std::string decode_html_entities(std::string_view s);

/// Drops tags plus script/style bodies, decodes entities, and collapses
/// whitespace runs to single spaces.
std::string html_to_text(std::string_view html);

}  // namespace explainrank
