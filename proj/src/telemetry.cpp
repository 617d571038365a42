#include "prefstream/telemetry.hpp"

#include <spdlog/spdlog.h>

namespace prefstream {

void Telemetry::count(const std::string& key, std::int64_t n) {
    std::lock_guard lock(mu_);
    counts_[key] += n;
}

std::int64_t Telemetry::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
}

std::map<std::string, std::int64_t> Telemetry::snapshot() const {
    std::lock_guard lock(mu_);
    return counts_;
}

void Telemetry::note(std::string message) {
    spdlog::debug("{}", message);
    std::lock_guard lock(mu_);
    if (events_.size() < kMaxEvents) events_.push_back(std::move(message));
}

std::vector<std::string> Telemetry::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

} // namespace prefstream
