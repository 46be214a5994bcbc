#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace clozebias::text {

// FNV-1a, 64 bit. Stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

// Identifier of a (model, sentence) pair: hex FNV-1a of model_id + '\x1f' + text.
std::string sentence_id(std::string_view model_id, std::string_view sentence);

// Decodes UTF-8 into code points. Throws Error(Format) on invalid sequences.
std::vector<char32_t> decode_utf8(std::string_view bytes);
std::string encode_utf8(const std::vector<char32_t>& code_points);
void append_utf8(std::string& out, char32_t cp);

// Number of code points.
std::size_t length(std::string_view utf8);

// Byte offset of the code point at index `cp_index`; length of the string if past the end.
std::size_t byte_offset(std::string_view utf8, std::size_t cp_index);

// Substring in code point coordinates [begin, end).
std::string slice(std::string_view utf8, std::size_t begin, std::size_t end);

std::string ascii_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

bool is_ascii_word_char(char32_t cp);
bool is_space(char32_t cp);

// True when `cp` is punctuation or whitespace that may trail a sentence-final pronoun.
bool is_trailing_punct(char32_t cp);

// Reads an entire file; throws Error(Format) if it cannot be opened.
std::string read_file(const std::string& path);

// Iterates `\n`-separated lines, stripping a trailing '\r'.
std::vector<std::string> lines(std::string_view content);

// Fixed-point rendering with `decimals` digits after the point.
std::string fixed(double value, int decimals = 6);

}  // namespace clozebias::text
