#include "prefstream/transferbench.hpp"

#include "prefstream/hashing.hpp"
#include "prefstream/parallel.hpp"
#include "prefstream/prompts.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace prefstream {

namespace {

bool pair_order(const UserPair& x, const UserPair& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    if (x.user_a != y.user_a) return x.user_a < y.user_a;
    return x.user_b < y.user_b;
}

std::vector<std::vector<double>> embed_all(const std::vector<UserHistory>& histories, ModelClient& embedder,
                                           std::size_t jobs) {
    std::vector<std::vector<double>> out(histories.size());
    parallel_for(histories.size(), jobs, [&](std::size_t i) {
        try {
            out[i] = embedder.embed(render_history(histories[i].triples, embedder.endpoint().empty_marker));
        } catch (const Error& e) {
            throw MatchingError("embedding " + histories[i].user_id + " failed: " + e.what());
        }
    });
    return out;
}

} // namespace

Json to_json(const MatchResult& m) {
    Json pairs = Json::array();
    for (const auto& p : m.pairs) pairs.push_back(Json{{"user_a", p.user_a}, {"user_b", p.user_b}, {"similarity", p.similarity}});
    return Json{{"pairs", std::move(pairs)}, {"repeated_users", m.repeated_users}};
}

MatchResult match_embeddings(std::span<const std::string> ids_a, std::span<const std::vector<double>> emb_a,
                             std::span<const std::string> ids_b, std::span<const std::vector<double>> emb_b,
                             std::size_t top_k) {
    if (ids_a.empty() || ids_b.empty()) throw ContractError("both corpora must be non-empty");
    if (ids_a.size() != emb_a.size() || ids_b.size() != emb_b.size()) throw ContractError("one embedding per user");
    if (top_k == 0) throw ContractError("top_k must be positive");

    std::vector<UserPair> all;
    all.reserve(ids_a.size() * ids_b.size());
    for (std::size_t i = 0; i < ids_a.size(); ++i) {
        for (std::size_t j = 0; j < ids_b.size(); ++j) {
            if (emb_a[i].size() != emb_b[j].size()) throw MatchingError("embedding dimensions differ");
            double s = 0.0;
            for (std::size_t d = 0; d < emb_a[i].size(); ++d) s += emb_a[i][d] * emb_b[j][d];
            all.push_back({ids_a[i], ids_b[j], s});
        }
    }
    const std::size_t k = std::min(top_k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), pair_order);
    all.resize(k);

    MatchResult out;
    std::map<std::string, int> seen;
    for (const auto& p : all) {
        ++seen["a:" + p.user_a];
        ++seen["b:" + p.user_b];
    }
    std::set<std::string> repeated;
    for (const auto& [key, n] : seen) {
        if (n > 1) repeated.insert(key.substr(2));
    }
    out.repeated_users.assign(repeated.begin(), repeated.end());
    out.pairs = std::move(all);
    return out;
}

MatchResult match_users(const std::vector<UserHistory>& histories_a, const std::vector<UserHistory>& histories_b,
                        ModelClient& embedder, std::size_t top_k, std::size_t jobs) {
    const auto emb_a = embed_all(histories_a, embedder, jobs);
    const auto emb_b = embed_all(histories_b, embedder, jobs);
    std::vector<std::string> ids_a;
    std::vector<std::string> ids_b;
    for (const auto& h : histories_a) ids_a.push_back(h.user_id);
    for (const auto& h : histories_b) ids_b.push_back(h.user_id);
    auto out = match_embeddings(ids_a, emb_a, ids_b, emb_b, top_k);
    if (!out.repeated_users.empty()) {
        spdlog::info("{} users appear in more than one matched pair", out.repeated_users.size());
    }
    return out;
}

TargetTable read_targets(const std::filesystem::path& path) {
    TargetTable out;
    std::size_t line = 0;
    for (auto j : read_jsonl(path)) {
        ++line;
        try {
            if (!j.contains("index")) j["index"] = 0;
            auto t = triple_from_json(j);
            if (!t.rejected) throw ValidationError("evaluation targets must be paired");
            out[j.at("user_id").get<std::string>()].push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

Json to_json(const TransferInstance& t) {
    Json j{{"history_ref", t.history_ref}, {"target_ref", t.target_ref}, {"origin", t.origin},
           {"target", to_json(t.target)}, {"user_id", t.history_ref}};
    return j;
}

TransferInstance transfer_instance_from_json(const Json& j) {
    try {
        return {j.at("history_ref").get<std::string>(), j.at("target_ref").get<std::string>(),
                j.at("origin").get<std::string>(), triple_from_json(j.at("target"))};
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed transfer instance: ") + e.what());
    }
}

std::vector<TransferInstance> swap_targets(std::span<const UserPair> pairs, const TargetTable& targets_a,
                                           const TargetTable& targets_b, Telemetry* telemetry) {
    std::vector<TransferInstance> out;
    out.reserve(2 * pairs.size());
    for (const auto& p : pairs) {
        const auto ta = targets_a.find(p.user_a);
        const auto tb = targets_b.find(p.user_b);
        if (ta == targets_a.end() || ta->second.empty() || tb == targets_b.end() || tb->second.empty()) {
            if (telemetry) {
                telemetry->count("pairs_without_targets");
                telemetry->note("pair (" + p.user_a + ", " + p.user_b + ") skipped: missing evaluation target");
            }
            continue;
        }
        out.push_back({p.user_a, p.user_b, "b->a", tb->second.front()});
        out.push_back({p.user_b, p.user_a, "a->b", ta->second.front()});
    }
    return out;
}

void NoiseConfig::check() const {
    if (!(intensity >= 0.0 && intensity < 1.0)) throw ConfigError("noise intensity must lie in [0, 1)");
}

Json provenance_json(const InjectedHistory& h) {
    Json origins = Json::array();
    for (const auto& o : h.origins) origins.push_back(Json{{"donor", o.from_donor}, {"source_index", o.source_index}});
    return Json{{"user_id", h.history.user_id}, {"donor_id", h.donor_id}, {"requested", h.requested},
                {"origins", std::move(origins)}};
}

std::size_t injected_count(double intensity, std::size_t primary_size) {
    NoiseConfig{intensity, 0}.check();
    const double x = intensity * static_cast<double>(primary_size) / (1.0 - intensity);
    return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

InjectedHistory inject_secondary(const UserHistory& primary, const UserHistory& donor, const NoiseConfig& config) {
    config.check();
    const std::size_t n = primary.size();
    InjectedHistory out;
    out.donor_id = donor.user_id;
    out.requested = injected_count(config.intensity, n);
    if (out.requested > 0 && donor.triples.empty()) throw ContractError("donor history is empty");
    const std::size_t m = std::min(out.requested, donor.size());

    std::mt19937_64 rng(derive_seed(derive_seed(config.seed, primary.user_id), donor.user_id));
    std::vector<std::size_t> donor_picks;
    std::vector<std::size_t> donor_positions(donor.size());
    std::iota(donor_positions.begin(), donor_positions.end(), 0);
    std::sample(donor_positions.begin(), donor_positions.end(), std::back_inserter(donor_picks), m, rng);

    std::vector<std::size_t> slots(n + m);
    std::iota(slots.begin(), slots.end(), 0);
    std::vector<std::size_t> donor_slots;
    std::sample(slots.begin(), slots.end(), std::back_inserter(donor_slots), m, rng);

    out.history.user_id = primary.user_id;
    out.history.dataset_tag = primary.dataset_tag;
    out.history.triples.reserve(n + m);
    out.origins.reserve(n + m);
    std::size_t next_primary = 0;
    std::size_t next_donor = 0;
    for (std::size_t slot = 0; slot < n + m; ++slot) {
        const bool is_donor = next_donor < m && donor_slots[next_donor] == slot;
        const InteractionTriple& src = is_donor ? donor.triples[donor_picks[next_donor++]] : primary.triples[next_primary++];
        InteractionTriple t = src;
        t.index = static_cast<std::int64_t>(slot);
        out.history.triples.push_back(std::move(t));
        out.origins.push_back({is_donor, src.index});
    }
    return out;
}

UserHistory remove_injected(const InjectedHistory& injected) {
    if (injected.origins.size() != injected.history.size()) throw ContractError("provenance does not cover the history");
    UserHistory out{injected.history.user_id, injected.history.dataset_tag, {}};
    for (std::size_t i = 0; i < injected.origins.size(); ++i) {
        if (injected.origins[i].from_donor) continue;
        InteractionTriple t = injected.history.triples[i];
        t.index = injected.origins[i].source_index;
        out.triples.push_back(std::move(t));
    }
    return out;
}

std::vector<InjectedHistory> inject_corpus(const std::vector<UserHistory>& primaries,
                                           const std::vector<UserHistory>& donors, const NoiseConfig& config,
                                           Telemetry* telemetry) {
    config.check();
    std::vector<InjectedHistory> out;
    out.reserve(primaries.size());
    for (const auto& p : primaries) {
        std::vector<const UserHistory*> pool;
        for (const auto& d : donors) {
            if (d.user_id != p.user_id) pool.push_back(&d);
        }
        if (pool.empty()) throw ContractError("no donor available for " + p.user_id);
        std::mt19937_64 rng(derive_seed(derive_seed(config.seed, "donor"), p.user_id));
        const auto* donor = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        auto injected = inject_secondary(p, *donor, config);
        const std::size_t got = injected.history.size() - p.size();
        if (telemetry && got < injected.requested) {
            telemetry->count("clamped_injections");
            telemetry->note(p.user_id + ": donor " + donor->user_id + " supplied " + std::to_string(got) + " of " +
                            std::to_string(injected.requested) + " requested triples");
        }
        out.push_back(std::move(injected));
    }
    return out;
}

} // namespace prefstream
