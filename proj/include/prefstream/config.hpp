#pragma once

#include "prefstream/core.hpp"

#include <filesystem>
#include <string_view>

namespace prefstream {

/// Parses YAML (and therefore JSON) text into a Json tree. Plain scalars are
/// typed as null, bool, integer or float when they look like one.
Json yaml_to_json(std::string_view text);

/// Reads a YAML/JSON configuration file. Throws ConfigError on parse failure.
Json load_config(const std::filesystem::path& path);

/// Resolves `p` against `base_dir` unless it is absolute.
std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::filesystem::path& p);

/// Rejects keys of `obj` that are not listed in `allowed`.
void require_known_keys(const Json& obj, std::initializer_list<std::string_view> allowed, std::string_view where);

} // namespace prefstream
