#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hpca {

/// Shortest decimal that parses back to exactly `value`.
std::string format_double(double value);
void append_double(std::string& out, double value);

std::optional<double> parse_double(std::string_view text);
std::optional<std::uint64_t> parse_uint64(std::string_view text);

/// Splits on runs of spaces and tabs; a trailing '\r' is ignored.
std::vector<std::string_view> split_fields(std::string_view line);

/// 64-bit FNV-1a, used for artifact checksums.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string checksum_hex(std::uint64_t value);

}  // namespace hpca
