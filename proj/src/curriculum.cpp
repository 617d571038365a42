#include "prefstream/curriculum.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace prefstream {

namespace {

// Keeps ceil(fraction * n) stable when fraction * n is an integer up to rounding.
std::size_t ceil_count(double fraction, std::size_t n) {
    const double x = fraction * static_cast<double>(n);
    return std::min(n, static_cast<std::size_t>(std::ceil(x - 1e-9)));
}

bool by_identity(const SampleScore& a, const SampleScore& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.index < b.index;
}

TailSide tail_side_from_string(const std::string& s) {
    if (s == "easiest" || s == "top") return TailSide::Easiest;
    if (s == "hardest" || s == "bottom") return TailSide::Hardest;
    throw ConfigError("tail_side must be 'easiest' or 'hardest', got '" + s + "'");
}

} // namespace

ScoreFields score_sample(double strong_p, double weak_p) {
    for (double p : {strong_p, weak_p}) {
        if (!(p > 0.0 && p <= 1.0)) {
            throw DomainError("probability " + std::to_string(p) + " outside (0, 1]; floor it first");
        }
    }
    return {strong_p, std::log(strong_p) - std::log(weak_p)};
}

double floor_probability(double p, double floor) {
    if (std::isnan(p)) throw DomainError("probability is NaN");
    return std::max(p, floor);
}

void PruneConfig::check() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw ConfigError("tail_fraction must lie in (0, 1]");
    if (!(tract_low >= 0.0 && tract_high <= 1.0 && tract_low <= tract_high)) {
        throw ConfigError("need 0 <= tract_low <= tract_high <= 1");
    }
}

PruneConfig PruneConfig::from_json(const Json& j) {
    PruneConfig c;
    if (j.contains("preset")) c = prune_preset(j["preset"].get<std::string>());
    try {
        c.alpha = j.value("alpha", c.alpha);
        c.tract_low = j.value("tract_low", c.tract_low);
        c.tract_high = j.value("tract_high", c.tract_high);
        c.tail_fraction = j.value("tail_fraction", c.tail_fraction);
        if (j.contains("tail_side")) c.tail_side = tail_side_from_string(j["tail_side"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("prune config: ") + e.what());
    }
    c.check();
    return c;
}

Json to_json(const PruneConfig& c) {
    return Json{{"alpha", c.alpha},
                {"tract_low", c.tract_low},
                {"tract_high", c.tract_high},
                {"tail_fraction", c.tail_fraction},
                {"tail_side", c.tail_side == TailSide::Easiest ? "easiest" : "hardest"}};
}

PruneConfig prune_preset(std::string_view name) {
    PruneConfig c;
    if (name == "amazon") {
        c.alpha = 0.4;
        c.tract_low = 0.50;
        c.tract_high = 0.90;
    } else if (name == "mind") {
        c.alpha = 0.1;
        c.tract_low = 0.99;
        c.tract_high = 1.00;
    } else if (name == "alignx") {
        c.alpha = 0.1;
        c.tract_low = 0.98;
        c.tract_high = 1.00;
    } else {
        throw ConfigError("unknown prune preset '" + std::string(name) + "'");
    }
    return c;
}

std::vector<SampleScore> prune(std::span<const SampleScore> scores, const PruneConfig& config, Telemetry* telemetry) {
    config.check();
    std::vector<SampleScore> pool(scores.begin(), scores.end());

    const std::size_t keep_learn = ceil_count(config.alpha, pool.size());
    auto learn_order = [](const SampleScore& a, const SampleScore& b) {
        if (a.s_learn != b.s_learn) return a.s_learn > b.s_learn;
        return by_identity(a, b);
    };
    if (keep_learn < pool.size()) {
        std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep_learn), pool.end(), learn_order);
        pool.resize(keep_learn);
    }

    std::erase_if(pool, [&](const SampleScore& s) { return s.s_tract < config.tract_low || s.s_tract > config.tract_high; });

    const std::size_t keep_tail = ceil_count(config.tail_fraction, pool.size());
    if (keep_tail < pool.size()) {
        auto tail_order = [&](const SampleScore& a, const SampleScore& b) {
            if (a.s_tract != b.s_tract) {
                return config.tail_side == TailSide::Easiest ? a.s_tract > b.s_tract : a.s_tract < b.s_tract;
            }
            return by_identity(a, b);
        };
        std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep_tail), pool.end(), tail_order);
        pool.resize(keep_tail);
    }

    std::sort(pool.begin(), pool.end(), by_identity);
    if (telemetry) {
        telemetry->count("pruned_in", static_cast<std::int64_t>(scores.size()));
        telemetry->count("pruned_kept", static_cast<std::int64_t>(pool.size()));
        if (pool.empty() && !scores.empty()) telemetry->note("pruning left no samples");
    }
    return pool;
}

Json to_json(const RlInstance& r) {
    return Json{{"user_id", r.user_id}, {"k1", r.k1}, {"k2", r.k2}, {"target1", to_json(r.target1)},
                {"target2", to_json(r.target2)}};
}

RlInstance rl_instance_from_json(const Json& j) {
    try {
        RlInstance r;
        r.user_id = j.at("user_id").get<std::string>();
        r.k1 = j.at("k1").get<std::int64_t>();
        r.k2 = j.at("k2").get<std::int64_t>();
        r.target1 = triple_from_json(j.at("target1"));
        r.target2 = triple_from_json(j.at("target2"));
        if (r.k1 >= r.k2) throw ValidationError("RL instance needs k1 < k2");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed RL instance: ") + e.what());
    }
}

std::optional<std::pair<std::int64_t, std::int64_t>> pick_rl_pair(std::span<const SampleScore> user_points) {
    if (user_points.size() < 2) return std::nullopt;
    std::vector<SampleScore> sorted(user_points.begin(), user_points.end());
    std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), [](const SampleScore& a, const SampleScore& b) {
        if (a.s_tract != b.s_tract) return a.s_tract < b.s_tract;
        return a.index < b.index;
    });
    const auto lo = std::min(sorted[0].index, sorted[1].index);
    const auto hi = std::max(sorted[0].index, sorted[1].index);
    if (lo == hi) throw ValidationError("duplicate score rows for index " + std::to_string(lo));
    return std::pair{lo, hi};
}

OrSkip<RlInstance> pick_rl_instance(const UserHistory& history, std::span<const SampleScore> user_points) {
    const auto pair = pick_rl_pair(user_points);
    if (!pair) return UserSkip{std::to_string(user_points.size()) + " filtered point(s) for " + history.user_id};
    const auto p1 = position_of(history, pair->first);
    const auto p2 = position_of(history, pair->second);
    if (!p1 || !p2) throw ValidationError("scored index missing from history of " + history.user_id);
    return RlInstance{history.user_id, pair->first, pair->second, history.triples[*p1], history.triples[*p2]};
}

const PruneConfig& CurriculumConfig::for_dataset(const std::string& tag) const {
    const auto it = datasets.find(tag);
    return it == datasets.end() ? fallback : it->second;
}

CurriculumConfig CurriculumConfig::from_json(const Json& j) {
    CurriculumConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw ConfigError("curriculum config must be a mapping");
    c.probability_floor = j.value("probability_floor", c.probability_floor);
    if (!(c.probability_floor > 0.0 && c.probability_floor < 1.0)) throw ConfigError("probability_floor must lie in (0, 1)");
    if (j.contains("default")) c.fallback = PruneConfig::from_json(j["default"]);
    if (j.contains("datasets")) {
        for (const auto& [tag, row] : j["datasets"].items()) c.datasets[tag] = PruneConfig::from_json(row);
    }
    return c;
}

std::vector<SampleScore> read_score_sidecar(const std::filesystem::path& path, double floor) {
    std::vector<SampleScore> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            const double strong = floor_probability(j.at("strong_p").get<double>(), floor);
            const double weak = floor_probability(j.at("weak_p").get<double>(), floor);
            const auto fields = score_sample(strong, weak);
            out.push_back({j.at("user_id").get<std::string>(), j.at("index").get<std::int64_t>(), fields.s_tract,
                           fields.s_learn});
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        } catch (const DomainError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

std::vector<RlInstance> build_rl_instances(const std::vector<UserHistory>& histories,
                                           std::span<const SampleScore> scores, const CurriculumConfig& config,
                                           Telemetry& telemetry) {
    std::unordered_map<std::string, const UserHistory*> by_user;
    for (const auto& h : histories) by_user.emplace(h.user_id, &h);

    std::map<std::string, std::vector<SampleScore>> by_dataset;
    for (const auto& s : scores) {
        const auto it = by_user.find(s.user_id);
        if (it == by_user.end()) {
            telemetry.count("scores_without_history");
            continue;
        }
        by_dataset[it->second->dataset_tag].push_back(s);
    }

    std::map<std::string, std::vector<SampleScore>> by_user_points;
    for (const auto& [tag, rows] : by_dataset) {
        const auto kept = prune(rows, config.for_dataset(tag), &telemetry);
        spdlog::info("dataset {}: kept {} of {} scored samples", tag, kept.size(), rows.size());
        for (const auto& s : kept) by_user_points[s.user_id].push_back(s);
    }

    std::vector<RlInstance> out;
    for (const auto& h : histories) {
        const auto it = by_user_points.find(h.user_id);
        if (it == by_user_points.end()) {
            telemetry.count("users_without_points");
            continue;
        }
        auto inst = pick_rl_instance(h, it->second);
        if (is_skip(inst)) {
            telemetry.count("skipped_users");
            telemetry.note(std::get<UserSkip>(inst).reason);
            continue;
        }
        out.push_back(std::move(std::get<RlInstance>(inst)));
    }
    return out;
}

} // namespace prefstream
