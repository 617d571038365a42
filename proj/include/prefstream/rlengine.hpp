#pragma once

#include "prefstream/core.hpp"
#include "prefstream/curriculum.hpp"
#include "prefstream/error.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/telemetry.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace prefstream {

inline constexpr double kDefaultClipEps = 0.2;
inline constexpr double kDefaultStdFloor = 1e-8;
inline constexpr double kUnclipped = std::numeric_limits<double>::infinity();

/// Two-stage sample: G summaries of H[0,k1), then G updates of one of them over H[k1,k2).
struct RolloutTree {
    RlInstance instance;
    std::vector<GenerationResult> initial;
    std::size_t selected_index = 0;
    std::vector<GenerationResult> updated;

    std::size_t group_size() const { return initial.size(); }
};

Json to_json(const RolloutTree& tree);

/// Samples a tree. Generation failures abort the instance (a skip, with telemetry).
OrSkip<RolloutTree> rollout(ModelClient& policy, const RlInstance& instance, const UserHistory& history,
                            std::size_t group_size, std::uint64_t seed);

/// Debiased judge probability of the target's chosen item.
double immediate_reward(ModelClient& judge, std::string_view summary, const InteractionTriple& target);

struct RewardSets {
    std::vector<double> initial;
    std::vector<double> updated;
};

enum class FutureCredit {
    SelectedOnly,  // only the initial summary the updates were conditioned on
    AllInitials,   // the same constant added to every initial summary
};

/// Updated summaries keep R = r; credited initial summaries get r + gamma * mean(R_updated).
RewardSets cumulative_rewards(std::size_t selected_index, const RewardSets& immediate, double gamma,
                              FutureCredit credit = FutureCredit::SelectedOnly);

/// (R - mean) / population std within one group; all zeros when std < std_floor.
std::vector<double> advantages(std::span<const double> group, double std_floor = kDefaultStdFloor);

struct TrainingRecord {
    std::string prompt;
    std::string response;
    std::vector<double> old_logprobs;
    double advantage = 0.0;
    std::string group_id;

    bool operator==(const TrainingRecord&) const = default;
};

Json to_json(const TrainingRecord& r);
TrainingRecord training_record_from_json(const Json& j);
std::vector<TrainingRecord> read_batch(const std::filesystem::path& path);
void write_batch(const std::filesystem::path& path, std::span<const TrainingRecord> records);

/// -(1/N) sum_P (1/L_P) sum_t min(rho_t A, clip(rho_t, 1-eps, 1+eps) A), rho_t = exp(new_t - old_t).
double surrogate_loss(std::span<const TrainingRecord> records, std::span<const std::vector<double>> new_logprobs,
                      double clip_eps = kDefaultClipEps);

/// d loss / d new_logprob for every token.
std::vector<std::vector<double>> surrogate_loss_gradient(std::span<const TrainingRecord> records,
                                                         std::span<const std::vector<double>> new_logprobs,
                                                         double clip_eps = kDefaultClipEps);

struct RewardedTree {
    RolloutTree tree;
    RewardSets immediate;
    RewardSets cumulative;
    RewardSets advantage;
};

/// Immediate rewards (h_k1 for initial, h_k2 for updated), cumulative rewards and per-set advantages.
RewardedTree score_tree(RolloutTree tree, ModelClient& judge, double gamma,
                        FutureCredit credit = FutureCredit::SelectedOnly);

/// One record per summary, initial set first. group_id names the instance and the set.
std::vector<TrainingRecord> export_batch(std::span<const RewardedTree> trees);

struct RolloutConfig {
    std::size_t group_size = 4;
    double gamma = 0.5;
    FutureCredit credit = FutureCredit::SelectedOnly;
    std::uint64_t seed = 0;
};

/// Rolls out and scores every instance concurrently; skipped instances are dropped.
std::vector<RewardedTree> run_rollouts(std::span<const RlInstance> instances, const std::vector<UserHistory>& histories,
                                       ModelClient& policy, ModelClient& judge, const RolloutConfig& config,
                                       std::size_t jobs, Telemetry& telemetry);

} // namespace prefstream
