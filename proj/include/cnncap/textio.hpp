#pragma once

// Small text helpers shared by the line-oriented file formats.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cnncap::text {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Whole-string parse; nullopt on trailing garbage or overflow.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string_view trim(std::string_view s);

/// Splits on runs of spaces/tabs.
std::vector<std::string_view> split_ws(std::string_view s);

/// Splits on every occurrence of `sep` (empty fields kept).
std::vector<std::string_view> split(std::string_view s, char sep);

/// Strips a trailing '#' comment.
std::string_view strip_comment(std::string_view line);

/// 64-bit FNV-1a, used for dataset fingerprints and blob checksums.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

} // namespace cnncap::text
