#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace rdc {

std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a, optionally seeded by folding the seed into the offset basis.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0);

/// SplitMix64 finalizer; used to derive independent seeds from tuples.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Uniform integer in [0, bound) from a 64-bit engine by rejection sampling.
/// Unlike std::uniform_int_distribution this is identical on every platform.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(std::uint64_t bits);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// English cardinal for small counts ("two", "fourteen"); decimal digits past twenty.
std::string number_word(std::size_t n);
/// English ordinal for small positions ("first", "third"); "21st" style past twenty.
std::string ordinal_word(std::size_t n);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string utc_timestamp();

}  // namespace rdc
