#include "prefstream/manifest.hpp"

#include "prefstream/error.hpp"
#include "prefstream/hashing.hpp"

#include <chrono>
#include <ctime>

namespace prefstream {

void RunManifest::add_config(const std::filesystem::path& p) { config_digests[p.string()] = sha256_file(p); }
void RunManifest::add_input(const std::filesystem::path& p) { input_digests[p.string()] = sha256_file(p); }
void RunManifest::add_output(const std::filesystem::path& p) { output_digests[p.string()] = sha256_file(p); }

Json to_json(const RunManifest& m) {
    return Json{{"command", m.command},
                {"arguments", m.arguments},
                {"seed", m.seed},
                {"config_digests", m.config_digests},
                {"input_digests", m.input_digests},
                {"output_digests", m.output_digests},
                {"started_at", m.started_at},
                {"finished_at", m.finished_at},
                {"counters", m.counters}};
}

RunManifest run_manifest_from_json(const Json& j) {
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.arguments = j.value("arguments", std::vector<std::string>{});
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config_digests = j.at("config_digests").get<std::map<std::string, std::string>>();
        m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
        m.output_digests = j.at("output_digests").get<std::map<std::string, std::string>>();
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        m.counters = j.value("counters", std::map<std::string, std::int64_t>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed run manifest: ") + e.what());
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void finish_manifest(RunManifest& m, const std::filesystem::path& path) {
    m.finished_at = utc_timestamp();
    write_text_atomic(path, to_json(m).dump(2) + "\n");
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
    auto p = output;
    p += ".manifest.json";
    return p;
}

} // namespace prefstream
