#pragma once

#include "prefstream/core.hpp"
#include "prefstream/error.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/telemetry.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace prefstream {

class MatchingError : public Error {
public:
    using Error::Error;
};

struct UserPair {
    std::string user_a;
    std::string user_b;
    double similarity = 0.0;

    bool operator==(const UserPair&) const = default;
};

struct MatchResult {
    std::vector<UserPair> pairs;               // similarity descending, then (user_a, user_b)
    std::vector<std::string> repeated_users;   // users that appear in more than one pair
};

Json to_json(const MatchResult& m);

/// Exact top-k over all A x B dot products of the given unit embeddings.
MatchResult match_embeddings(std::span<const std::string> ids_a, std::span<const std::vector<double>> emb_a,
                             std::span<const std::string> ids_b, std::span<const std::vector<double>> emb_b,
                             std::size_t top_k);

/// Renders every history with the interaction-history block, embeds it and matches.
MatchResult match_users(const std::vector<UserHistory>& histories_a, const std::vector<UserHistory>& histories_b,
                        ModelClient& embedder, std::size_t top_k, std::size_t jobs = 1);

/// Evaluation targets by user, in file order.
using TargetTable = std::map<std::string, std::vector<InteractionTriple>>;

/// Rows {user_id, index?, context?, chosen, rejected}.
TargetTable read_targets(const std::filesystem::path& path);

struct TransferInstance {
    std::string history_ref;  // user whose history is shown
    std::string target_ref;   // user the target came from
    std::string origin;       // "a->b" or "b->a"
    InteractionTriple target;
};

Json to_json(const TransferInstance& t);
TransferInstance transfer_instance_from_json(const Json& j);

/// Two instances per pair: A's history with B's first target, and the reverse.
/// Pairs where either side lacks a target are skipped with telemetry.
std::vector<TransferInstance> swap_targets(std::span<const UserPair> pairs, const TargetTable& targets_a,
                                           const TargetTable& targets_b, Telemetry* telemetry = nullptr);

struct NoiseConfig {
    double intensity = 0.0;  // share of the fused history drawn from the donor, in [0, 1)
    std::uint64_t seed = 0;

    void check() const;
};

struct TripleOrigin {
    bool from_donor = false;
    std::int64_t source_index = 0;  // index in the history it came from
};

struct InjectedHistory {
    UserHistory history;  // primary's id and tag, indices 0..n+m-1
    std::vector<TripleOrigin> origins;  // one per triple
    std::string donor_id;
    std::size_t requested = 0;  // donor triples asked for before clamping to the donor's size
};

Json provenance_json(const InjectedHistory& h);

/// round_half_up(intensity * n / (1 - intensity)).
std::size_t injected_count(double intensity, std::size_t primary_size);

/// Samples donor triples and interleaves them at uniformly random positions,
/// keeping both relative orders.
InjectedHistory inject_secondary(const UserHistory& primary, const UserHistory& donor, const NoiseConfig& config);

/// Drops donor triples and restores the primary indices.
UserHistory remove_injected(const InjectedHistory& injected);

/// Pairs each user with a uniformly drawn donor (never itself) and injects.
std::vector<InjectedHistory> inject_corpus(const std::vector<UserHistory>& primaries,
                                           const std::vector<UserHistory>& donors, const NoiseConfig& config,
                                           Telemetry* telemetry = nullptr);

} // namespace prefstream
