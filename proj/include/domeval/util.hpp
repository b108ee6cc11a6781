#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

namespace domeval {

// 64-bit FNV-1a. Stable across platforms; used for seeds and audit hashes.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a label.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return splitmix64(master ^ fnv1a64(label));
}

std::string hex64(std::uint64_t v);

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);
std::string rtrim(std::string_view s);
bool is_blank(std::string_view s);

/// Lowercase, collapse whitespace runs to one space, trim.
std::string normalize_whitespace_lower(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Replaces {name} placeholders in one pass; inserted values are never
/// rescanned and unknown placeholders are left untouched.
std::string fill_template(std::string_view tmpl,
                          std::initializer_list<std::pair<std::string_view, std::string_view>> vars);

/// RFC 4180 CSV: quoted fields may hold commas, quotes ("") and newlines.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view value);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temp file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Returns the first balanced JSON object or array found in text, or empty.
std::string extract_json(std::string_view text, char open);

}  // namespace domeval
