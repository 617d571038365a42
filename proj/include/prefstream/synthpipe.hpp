#pragma once

#include "prefstream/core.hpp"
#include "prefstream/error.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/telemetry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace prefstream {

struct SynthConfig {
    double tau_tract = 0.9;
    std::size_t max_targets = 5;
    std::size_t min_subset = 3;  // users with a tractable subset this small or smaller are skipped
    std::size_t min_kept = 3;
    double lambda = 0.8;
    std::size_t segments = 3;
    std::size_t min_per_segment = 3;
    std::uint64_t seed = 0;

    void check() const;
    /// Reads the synthesis keys of a stage config, ignoring endpoint references.
    static SynthConfig from_json(const Json& j);
};

/// Tractability score per history index, per user.
using TractScores = std::unordered_map<std::string, std::map<std::int64_t, double>>;

/// Score sidecar rows {user_id, index, s_tract} (a strong_p column is accepted as s_tract).
TractScores read_tract_scores(const std::filesystem::path& path);

struct TargetSet {
    HistorySegment segment;
    std::vector<InteractionTriple> targets;  // ordered by index
};

struct ProfileCandidate {
    std::int64_t target_index = 0;
    std::string reasoning;
    std::string summary;
    bool validated = false;
};

struct SynthRecord {
    std::string id;
    std::string user_id;
    std::optional<PreferenceSummary> input_prior;
    HistorySegment input_segment;
    std::vector<std::int64_t> target_indices;
    std::string output_reasoning;
    std::string output_summary;
    double accuracy = 0.0;
};

Json to_json(const SynthRecord& r);
SynthRecord synth_record_from_json(const Json& j);

/// The clients one synthesis run talks to.
struct SynthModels {
    ModelClient& generator;
    ModelClient& judge;
    ModelClient& merger;
};

/// Samples up to max_targets paired triples with S_tract >= tau_tract from the
/// segment, uniformly without replacement, seeded by (seed, user_id, segment).
OrSkip<TargetSet> select_targets(const UserHistory& history, HistorySegment segment,
                                 const std::map<std::int64_t, double>& scores, const SynthConfig& config);

/// The generation prompt for one target: the segment without any target triple,
/// with the target shown unlabeled.
std::string target_prompt(const UserHistory& history, const TargetSet& targets, const InteractionTriple& target,
                          const std::optional<PreferenceSummary>& prior, std::string_view empty_marker = "None");

OrSkip<std::vector<ProfileCandidate>> generate_candidates(const UserHistory& history, const TargetSet& targets,
                                                          const std::optional<PreferenceSummary>& prior,
                                                          ModelClient& generator, std::uint64_t seed);

/// True when the judge, reading `summary`, puts more than half its mass on the chosen item.
bool predicts_choice(ModelClient& judge, std::string_view summary, const InteractionTriple& target);

/// Marks candidates whose summary predicts their own target; returns the kept ones
/// or a skip when fewer than min_kept survive.
OrSkip<std::vector<ProfileCandidate>> validate_candidates(std::vector<ProfileCandidate>& candidates,
                                                          const TargetSet& targets, ModelClient& judge,
                                                          std::size_t min_kept);

struct MergedProfile {
    std::string reasoning;
    std::string summary;
};

OrSkip<MergedProfile> merge_profiles(const std::vector<ProfileCandidate>& kept, ModelClient& merger,
                                     std::uint64_t seed);

/// Accuracy of the merged summary over the validation targets; a skip when it is below lambda.
OrSkip<double> user_level_filter(std::string_view merged, const std::vector<InteractionTriple>& validation_targets,
                                 ModelClient& judge, double lambda);

struct UserSynthesis {
    std::vector<SynthRecord> records;
    std::optional<UserSkip> skip;  // why later segments were abandoned
};

/// Runs generate, validate, merge and filter over each segment in order; every
/// accepted segment becomes the prior of the next one.
UserSynthesis build_streaming_sft(const UserHistory& history, const std::map<std::int64_t, double>& scores,
                                  SynthModels models, const SynthConfig& config, Telemetry& telemetry);

/// All users, processed concurrently; records come back in input order.
std::vector<SynthRecord> synthesize_sft(const std::vector<UserHistory>& histories, const TractScores& scores,
                                        SynthModels models, const SynthConfig& config, std::size_t jobs,
                                        Telemetry& telemetry);

} // namespace prefstream
