#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace prefstream {

/// 64-bit FNV-1a. Stable across platforms, used for seeds and ids.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; good avalanche for combining seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic seed for a named sub-stream of `base`.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a);

std::string hex64(std::uint64_t v);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

} // namespace prefstream
