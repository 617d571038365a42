#include "prefstream/synthpipe.hpp"

#include "prefstream/hashing.hpp"
#include "prefstream/parallel.hpp"
#include "prefstream/prompts.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <random>

namespace prefstream {

namespace {

// Inclusive comparison for fractions such as 4/5 against 0.8.
constexpr double kThresholdSlack = 1e-12;

std::uint64_t user_seed(std::uint64_t seed, std::string_view user_id, std::string_view stage) {
    return derive_seed(derive_seed(seed, user_id), stage);
}

} // namespace

void SynthConfig::check() const {
    if (tau_tract < 0.0 || tau_tract > 1.0) throw ConfigError("tau_tract must lie in [0, 1]");
    if (max_targets == 0) throw ConfigError("max_targets must be positive");
    if (min_kept == 0) throw ConfigError("min_kept must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0, 1]");
    if (segments < 2) throw ConfigError("streaming synthesis needs at least two segments");
    if (min_per_segment == 0) throw ConfigError("min_per_segment must be positive");
}

SynthConfig SynthConfig::from_json(const Json& j) {
    SynthConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw ConfigError("synthesis config must be a mapping");
    try {
        c.tau_tract = j.value("tau_tract", c.tau_tract);
        c.max_targets = j.value("max_targets", c.max_targets);
        c.min_subset = j.value("min_subset", c.min_subset);
        c.min_kept = j.value("min_kept", c.min_kept);
        c.lambda = j.value("lambda", c.lambda);
        c.segments = j.value("segments", c.segments);
        c.min_per_segment = j.value("min_per_segment", c.min_per_segment);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthesis config: ") + e.what());
    }
    c.check();
    return c;
}

TractScores read_tract_scores(const std::filesystem::path& path) {
    TractScores out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            const auto& value = j.contains("s_tract") ? j.at("s_tract") : j.at("strong_p");
            const double s = value.get<double>();
            if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("tractability score outside [0, 1]");
            out[j.at("user_id").get<std::string>()][j.at("index").get<std::int64_t>()] = s;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

Json to_json(const SynthRecord& r) {
    Json j{
        {"id", r.id},
        {"user_id", r.user_id},
        {"segment", Json::array({r.input_segment.start, r.input_segment.end})},
        {"targets", r.target_indices},
        {"reasoning", r.output_reasoning},
        {"summary", r.output_summary},
        {"accuracy", r.accuracy},
    };
    if (r.input_prior) {
        j["prior_text"] = r.input_prior->text;
        j["prior_id"] = r.input_prior->id;
        j["prior"] = to_json(*r.input_prior);
    }
    return j;
}

SynthRecord synth_record_from_json(const Json& j) {
    try {
        SynthRecord r;
        r.id = j.at("id").get<std::string>();
        r.user_id = j.at("user_id").get<std::string>();
        const auto& seg = j.at("segment");
        r.input_segment = {seg.at(0).get<std::size_t>(), seg.at(1).get<std::size_t>()};
        if (j.contains("targets")) r.target_indices = j["targets"].get<std::vector<std::int64_t>>();
        r.output_reasoning = j.value("reasoning", std::string{});
        r.output_summary = j.at("summary").get<std::string>();
        r.accuracy = j.at("accuracy").get<double>();
        if (j.contains("prior")) r.input_prior = summary_from_json(j["prior"]);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed synthesis record: ") + e.what());
    }
}

OrSkip<TargetSet> select_targets(const UserHistory& history, HistorySegment segment,
                                 const std::map<std::int64_t, double>& scores, const SynthConfig& config) {
    const auto triples = slice(history, segment);
    std::vector<InteractionTriple> tractable;
    for (const auto& t : triples) {
        const auto it = scores.find(t.index);
        if (it == scores.end()) {
            throw ContractError("no tractability score for " + history.user_id + " index " + std::to_string(t.index));
        }
        if (t.is_paired() && it->second >= config.tau_tract) tractable.push_back(t);
    }
    if (tractable.size() <= config.min_subset) {
        return UserSkip{"tractable subset of " + std::to_string(tractable.size()) + " in segment [" +
                        std::to_string(segment.start) + "," + std::to_string(segment.end) + ")"};
    }
    TargetSet out{segment, {}};
    std::mt19937_64 rng(user_seed(config.seed, history.user_id, "targets:" + std::to_string(segment.start)));
    std::sample(tractable.begin(), tractable.end(), std::back_inserter(out.targets),
                std::min(config.max_targets, tractable.size()), rng);
    return out;
}

std::string target_prompt(const UserHistory& history, const TargetSet& targets, const InteractionTriple& target,
                          const std::optional<PreferenceSummary>& prior, std::string_view empty_marker) {
    std::vector<InteractionTriple> visible;
    for (const auto& t : slice(history, targets.segment)) {
        const bool is_target = std::any_of(targets.targets.begin(), targets.targets.end(),
                                           [&](const InteractionTriple& x) { return x.index == t.index; });
        if (!is_target) visible.push_back(t);
    }
    std::optional<std::string_view> prior_text;
    if (prior) prior_text = prior->text;
    return render_target_prompt(prior_text, render_history(visible, empty_marker), target, empty_marker);
}

OrSkip<std::vector<ProfileCandidate>> generate_candidates(const UserHistory& history, const TargetSet& targets,
                                                          const std::optional<PreferenceSummary>& prior,
                                                          ModelClient& generator, std::uint64_t seed) {
    std::vector<ProfileCandidate> out;
    for (const auto& target : targets.targets) {
        const auto prompt = target_prompt(history, targets, target, prior, generator.endpoint().empty_marker);
        try {
            auto result = generator.generate(prompt, {derive_seed(seed, static_cast<std::uint64_t>(target.index)), false});
            out.push_back({target.index, result.reasoning.value_or(""), std::move(result.summary), false});
        } catch (const GenerationError& e) {
            generator.telemetry().count("dropped_candidates");
            generator.telemetry().note(history.user_id + ": dropped candidate for target " +
                                       std::to_string(target.index) + ": " + e.what());
        } catch (const BackendError& e) {
            generator.telemetry().count("dropped_candidates");
            generator.telemetry().note(history.user_id + ": dropped candidate for target " +
                                       std::to_string(target.index) + ": " + e.what());
        }
    }
    if (out.empty()) return UserSkip{"every candidate generation failed"};
    return out;
}

bool predicts_choice(ModelClient& judge, std::string_view summary, const InteractionTriple& target) {
    if (!target.rejected) throw ContractError("validation targets must be paired");
    try {
        return judge.judge_pair(summary, target.context, target.chosen, *target.rejected).prob_first > 0.5;
    } catch (const JudgeError& e) {
        judge.telemetry().count("judge_errors");
        judge.telemetry().note(std::string("judge error counted as a miss: ") + e.what());
    } catch (const BackendError& e) {
        judge.telemetry().count("judge_errors");
        judge.telemetry().note(std::string("judge error counted as a miss: ") + e.what());
    }
    return false;
}

OrSkip<std::vector<ProfileCandidate>> validate_candidates(std::vector<ProfileCandidate>& candidates,
                                                          const TargetSet& targets, ModelClient& judge,
                                                          std::size_t min_kept) {
    std::vector<ProfileCandidate> kept;
    for (auto& c : candidates) {
        const auto it = std::find_if(targets.targets.begin(), targets.targets.end(),
                                     [&](const InteractionTriple& t) { return t.index == c.target_index; });
        if (it == targets.targets.end()) throw ContractError("candidate refers to an unknown target");
        c.validated = predicts_choice(judge, c.summary, *it);
        if (c.validated) kept.push_back(c);
    }
    if (kept.size() < min_kept) {
        return UserSkip{std::to_string(kept.size()) + " of " + std::to_string(candidates.size()) +
                        " candidates passed validation"};
    }
    return kept;
}

OrSkip<MergedProfile> merge_profiles(const std::vector<ProfileCandidate>& kept, ModelClient& merger,
                                     std::uint64_t seed) {
    if (kept.empty()) throw ContractError("nothing to merge");
    std::vector<MergeCandidate> inputs;
    inputs.reserve(kept.size());
    for (const auto& c : kept) inputs.push_back({c.reasoning, c.summary});
    try {
        auto result = merger.generate(render_merge_prompt(inputs), {seed, false});
        return MergedProfile{result.reasoning.value_or(""), std::move(result.summary)};
    } catch (const GenerationError& e) {
        return UserSkip{std::string("merge failed: ") + e.what()};
    } catch (const BackendError& e) {
        return UserSkip{std::string("merge failed: ") + e.what()};
    }
}

OrSkip<double> user_level_filter(std::string_view merged, const std::vector<InteractionTriple>& validation_targets,
                                 ModelClient& judge, double lambda) {
    if (validation_targets.empty()) throw ContractError("user-level filtering needs at least one target");
    std::size_t correct = 0;
    for (const auto& t : validation_targets) correct += predicts_choice(judge, merged, t) ? 1 : 0;
    const double accuracy = static_cast<double>(correct) / static_cast<double>(validation_targets.size());
    if (accuracy + kThresholdSlack < lambda) {
        return UserSkip{"merged summary accuracy " + std::to_string(accuracy) + " below " + std::to_string(lambda)};
    }
    return accuracy;
}

UserSynthesis build_streaming_sft(const UserHistory& history, const std::map<std::int64_t, double>& scores,
                                  SynthModels models, const SynthConfig& config, Telemetry& telemetry) {
    UserSynthesis out;
    if (history.size() < config.segments * config.min_per_segment) {
        out.skip = UserSkip{"history of " + std::to_string(history.size()) + " cannot fill " +
                            std::to_string(config.segments) + " segments"};
        return out;
    }
    const auto boundaries = near_equal_boundaries(history.size(), config.segments);
    const auto segments = segment(history, boundaries);

    std::optional<PreferenceSummary> prior;
    for (const auto& seg : segments) {
        auto skip = [&](UserSkip s) -> UserSynthesis {
            s.reason = history.user_id + " segment [" + std::to_string(seg.start) + "," + std::to_string(seg.end) +
                       "): " + s.reason;
            telemetry.count("skipped_users");
            telemetry.note(s.reason);
            out.skip = std::move(s);
            return std::move(out);
        };
        const std::string stage = "segment:" + std::to_string(seg.start);

        auto targets = select_targets(history, seg, scores, config);
        if (is_skip(targets)) return skip(std::get<UserSkip>(targets));
        const auto& target_set = std::get<TargetSet>(targets);

        auto candidates = generate_candidates(history, target_set, prior, models.generator,
                                              user_seed(config.seed, history.user_id, stage + ":gen"));
        if (is_skip(candidates)) return skip(std::get<UserSkip>(candidates));
        auto& generated = std::get<std::vector<ProfileCandidate>>(candidates);
        telemetry.count("candidates", static_cast<std::int64_t>(generated.size()));

        auto kept = validate_candidates(generated, target_set, models.judge, config.min_kept);
        if (is_skip(kept)) return skip(std::get<UserSkip>(kept));
        telemetry.count("validated_candidates",
                        static_cast<std::int64_t>(std::get<std::vector<ProfileCandidate>>(kept).size()));

        auto merged = merge_profiles(std::get<std::vector<ProfileCandidate>>(kept), models.merger,
                                     user_seed(config.seed, history.user_id, stage + ":merge"));
        if (is_skip(merged)) return skip(std::get<UserSkip>(merged));
        auto& profile = std::get<MergedProfile>(merged);

        auto accuracy = user_level_filter(profile.summary, target_set.targets, models.judge, config.lambda);
        if (is_skip(accuracy)) return skip(std::get<UserSkip>(accuracy));

        auto summary = make_summary(profile.summary,
                                    profile.reasoning.empty() ? std::nullopt : std::optional(profile.reasoning),
                                    prior ? std::optional(prior->id) : std::nullopt, seg,
                                    models.generator.token_counter().count(profile.summary));
        SynthRecord record;
        record.id = summary.id;
        record.user_id = history.user_id;
        record.input_prior = prior;
        record.input_segment = seg;
        for (const auto& t : target_set.targets) record.target_indices.push_back(t.index);
        record.output_reasoning = profile.reasoning;
        record.output_summary = profile.summary;
        record.accuracy = std::get<double>(accuracy);
        out.records.push_back(std::move(record));
        telemetry.count("records");
        prior = std::move(summary);
    }
    return out;
}

std::vector<SynthRecord> synthesize_sft(const std::vector<UserHistory>& histories, const TractScores& scores,
                                        SynthModels models, const SynthConfig& config, std::size_t jobs,
                                        Telemetry& telemetry) {
    config.check();
    std::vector<UserSynthesis> per_user(histories.size());
    const std::map<std::int64_t, double> no_scores;
    parallel_for(histories.size(), jobs, [&](std::size_t i) {
        const auto it = scores.find(histories[i].user_id);
        per_user[i] = build_streaming_sft(histories[i], it == scores.end() ? no_scores : it->second, models, config,
                                          telemetry);
    });
    std::vector<SynthRecord> out;
    for (auto& u : per_user) {
        for (auto& r : u.records) out.push_back(std::move(r));
    }
    spdlog::info("synthesized {} records from {} users", out.size(), histories.size());
    return out;
}

} // namespace prefstream
