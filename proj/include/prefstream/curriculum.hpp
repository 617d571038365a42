#pragma once

#include "prefstream/core.hpp"
#include "prefstream/error.hpp"
#include "prefstream/telemetry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace prefstream {

inline constexpr double kDefaultProbabilityFloor = 1e-6;

struct SampleScore {
    std::string user_id;
    std::int64_t index = 0;  // history index of the instance's target triple
    double s_tract = 0.0;    // strong-model probability of the true choice
    double s_learn = 0.0;    // ln(strong_p) - ln(weak_p)

    bool operator==(const SampleScore&) const = default;
};

struct ScoreFields {
    double s_tract = 0.0;
    double s_learn = 0.0;
};

/// Both probabilities must lie in (0, 1]; zero raises DomainError.
ScoreFields score_sample(double strong_p, double weak_p);

/// max(p, floor), for scorers that can emit exact zeros.
double floor_probability(double p, double floor = kDefaultProbabilityFloor);

enum class TailSide { Easiest, Hardest };

struct PruneConfig {
    double alpha = 1.0;  // fraction kept by learning potential
    double tract_low = 0.0;
    double tract_high = 1.0;
    double tail_fraction = 1.0;
    TailSide tail_side = TailSide::Hardest;

    void check() const;
    static PruneConfig from_json(const Json& j);
};

Json to_json(const PruneConfig& c);

/// Named rows of the RL sampling table: "amazon", "mind", "alignx".
PruneConfig prune_preset(std::string_view name);

/// Three-step filter: top ceil(alpha*N) by s_learn, then the closed s_tract
/// interval, then ceil(tail_fraction*M) from the chosen s_tract tail. Ties break
/// on (user_id, index), so the result does not depend on input order. The output
/// is sorted by (user_id, index).
std::vector<SampleScore> prune(std::span<const SampleScore> scores, const PruneConfig& config,
                               Telemetry* telemetry = nullptr);

struct RlInstance {
    std::string user_id;
    std::int64_t k1 = 0;
    std::int64_t k2 = 0;
    InteractionTriple target1;
    InteractionTriple target2;
};

Json to_json(const RlInstance& r);
RlInstance rl_instance_from_json(const Json& j);

/// The two points with the smallest s_tract (earlier index first on ties),
/// ordered by index. Empty when fewer than two points are given.
std::optional<std::pair<std::int64_t, std::int64_t>> pick_rl_pair(std::span<const SampleScore> user_points);

OrSkip<RlInstance> pick_rl_instance(const UserHistory& history, std::span<const SampleScore> user_points);

/// Per-dataset pruning table plus the probability floor.
struct CurriculumConfig {
    double probability_floor = kDefaultProbabilityFloor;
    std::map<std::string, PruneConfig> datasets;
    PruneConfig fallback;  // datasets without a row

    const PruneConfig& for_dataset(const std::string& tag) const;
    static CurriculumConfig from_json(const Json& j);
};

/// Score sidecar rows {user_id, index, strong_p, weak_p}, floored then scored.
std::vector<SampleScore> read_score_sidecar(const std::filesystem::path& path,
                                            double floor = kDefaultProbabilityFloor);

/// Prunes each dataset separately (dataset taken from the user's history; users
/// without a history fall into the fallback row) and picks one instance per user.
std::vector<RlInstance> build_rl_instances(const std::vector<UserHistory>& histories,
                                           std::span<const SampleScore> scores, const CurriculumConfig& config,
                                           Telemetry& telemetry);

} // namespace prefstream
