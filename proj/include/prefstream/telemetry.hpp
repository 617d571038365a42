#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace prefstream {

/// Thread-safe named counters plus a bounded event log.
class Telemetry {
public:
    void count(const std::string& key, std::int64_t n = 1);
    std::int64_t get(const std::string& key) const;
    std::map<std::string, std::int64_t> snapshot() const;

    /// Records a notable event (skip, truncation, dropped candidate). Also logged at debug level.
    void note(std::string message);
    std::vector<std::string> events() const;

private:
    static constexpr std::size_t kMaxEvents = 10000;

    mutable std::mutex mu_;
    std::map<std::string, std::int64_t> counts_;
    std::vector<std::string> events_;
};

} // namespace prefstream
