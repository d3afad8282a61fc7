#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tutorloop {

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Collapses every run of whitespace to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

struct Span {
    std::size_t offset = 0;
    std::size_t length = 0;
};

// Finds `needle` inside `haystack` after collapsing whitespace in both, and
// returns the matching byte range of the original haystack.
std::optional<Span> find_normalized(std::string_view haystack, std::string_view needle);

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// ISO-8601 UTC with millisecond precision.
std::string utc_now_iso8601();

// 128 random bits from the OS entropy source, hex encoded.
std::string random_token_128();

std::string format_fixed(double value, int decimals);

}  // namespace tutorloop
