#pragma once

#include "prefstream/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace prefstream {

/// What a command read, what it wrote, and with which seed. Digests are SHA-256
/// of file contents, so two runs can be compared without timestamps.
struct RunManifest {
    std::string command;
    std::vector<std::string> arguments;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config_digests;
    std::map<std::string, std::string> input_digests;
    std::map<std::string, std::string> output_digests;
    std::string started_at;
    std::string finished_at;
    std::map<std::string, std::int64_t> counters;

    void add_config(const std::filesystem::path& p);
    void add_input(const std::filesystem::path& p);
    void add_output(const std::filesystem::path& p);
};

Json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const Json& j);

/// UTC time as 2024-01-31T12:00:00Z.
std::string utc_timestamp();

/// Stamps finished_at and writes the manifest through a temp file and a rename.
void finish_manifest(RunManifest& m, const std::filesystem::path& path);

/// "<output>.manifest.json" beside a file output.
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

} // namespace prefstream
