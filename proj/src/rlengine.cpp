#include "prefstream/rlengine.hpp"

#include "prefstream/hashing.hpp"
#include "prefstream/parallel.hpp"
#include "prefstream/prompts.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace prefstream {

namespace {

Json generation_json(const GenerationResult& g) {
    Json j{{"prompt", g.prompt}, {"completion", g.completion}, {"summary", g.summary}};
    if (g.reasoning) j["reasoning"] = *g.reasoning;
    if (g.token_logprobs) j["token_logprobs"] = *g.token_logprobs;
    return j;
}

GenerationResult sample(ModelClient& policy, std::string prompt, std::uint64_t seed) {
    auto result = policy.generate(std::move(prompt), {seed, true});
    if (!result.token_logprobs || result.token_logprobs->empty()) {
        result.token_logprobs = policy.policy_logprobs(result.prompt, result.completion);
    }
    if (result.token_logprobs->empty()) throw GenerationError("policy returned no response tokens");
    return result;
}

void check_lengths(std::span<const TrainingRecord> records, std::span<const std::vector<double>> new_logprobs) {
    if (records.size() != new_logprobs.size()) {
        throw ContractError("loss needs one logprob sequence per record (" + std::to_string(records.size()) + " vs " +
                            std::to_string(new_logprobs.size()) + ")");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].old_logprobs.empty()) throw ContractError("record " + std::to_string(i) + " has no tokens");
        if (records[i].old_logprobs.size() != new_logprobs[i].size()) {
            throw ContractError("record " + std::to_string(i) + ": " + std::to_string(records[i].old_logprobs.size()) +
                                " old vs " + std::to_string(new_logprobs[i].size()) + " new logprobs");
        }
    }
}

double clip(double ratio, double eps) { return std::clamp(ratio, 1.0 - eps, 1.0 + eps); }

} // namespace

Json to_json(const RolloutTree& tree) {
    Json initial = Json::array();
    Json updated = Json::array();
    for (const auto& g : tree.initial) initial.push_back(generation_json(g));
    for (const auto& g : tree.updated) updated.push_back(generation_json(g));
    return Json{{"instance", to_json(tree.instance)},
                {"selected_index", tree.selected_index},
                {"initial", std::move(initial)},
                {"updated", std::move(updated)}};
}

OrSkip<RolloutTree> rollout(ModelClient& policy, const RlInstance& instance, const UserHistory& history,
                            std::size_t group_size, std::uint64_t seed) {
    if (group_size == 0) throw ContractError("group size must be positive");
    const auto p1 = position_of(history, instance.k1);
    const auto p2 = position_of(history, instance.k2);
    if (!p1 || !p2 || *p1 >= *p2) throw ContractError("instance indices do not fit the history of " + history.user_id);
    const auto& marker = policy.endpoint().empty_marker;

    RolloutTree tree;
    tree.instance = instance;
    try {
        const auto initial_prompt =
            render_generation_prompt(std::nullopt, render_history(slice(history, {0, *p1}), marker), marker);
        for (std::size_t i = 0; i < group_size; ++i) {
            tree.initial.push_back(sample(policy, initial_prompt, derive_seed(derive_seed(seed, "initial"), i)));
        }
        std::mt19937_64 rng(derive_seed(seed, "select"));
        tree.selected_index = std::uniform_int_distribution<std::size_t>(0, group_size - 1)(rng);

        const auto updated_prompt = render_generation_prompt(
            tree.initial[tree.selected_index].summary, render_history(slice(history, {*p1, *p2}), marker), marker);
        for (std::size_t j = 0; j < group_size; ++j) {
            tree.updated.push_back(sample(policy, updated_prompt, derive_seed(derive_seed(seed, "updated"), j)));
        }
    } catch (const GenerationError& e) {
        policy.telemetry().count("aborted_rollouts");
        return UserSkip{"rollout for " + instance.user_id + " aborted: " + e.what()};
    } catch (const BackendError& e) {
        policy.telemetry().count("aborted_rollouts");
        return UserSkip{"rollout for " + instance.user_id + " aborted: " + e.what()};
    }
    return tree;
}

double immediate_reward(ModelClient& judge, std::string_view summary, const InteractionTriple& target) {
    if (!target.rejected) throw ContractError("rewards need a paired target");
    return judge.judge_pair(summary, target.context, target.chosen, *target.rejected, true).prob_first;
}

RewardSets cumulative_rewards(std::size_t selected_index, const RewardSets& immediate, double gamma,
                              FutureCredit credit) {
    if (immediate.initial.size() != immediate.updated.size() || immediate.initial.empty()) {
        throw ContractError("reward sets must both hold G > 0 values");
    }
    if (selected_index >= immediate.initial.size()) throw ContractError("selected index out of range");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in [0, 1]");

    RewardSets out = immediate;
    double future = 0.0;
    for (double r : out.updated) future += r;
    future /= static_cast<double>(out.updated.size());
    if (credit == FutureCredit::SelectedOnly) {
        out.initial[selected_index] += gamma * future;
    } else {
        for (double& r : out.initial) r += gamma * future;
    }
    return out;
}

std::vector<double> advantages(std::span<const double> group, double std_floor) {
    if (group.empty()) throw ContractError("advantage group is empty");
    const double n = static_cast<double>(group.size());
    double mean = 0.0;
    for (double r : group) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : group) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(group.size(), 0.0);
    if (sd < std_floor) return out;
    for (std::size_t i = 0; i < group.size(); ++i) out[i] = (group[i] - mean) / sd;
    return out;
}

Json to_json(const TrainingRecord& r) {
    return Json{{"prompt", r.prompt},
                {"response", r.response},
                {"old_logprobs", r.old_logprobs},
                {"advantage", r.advantage},
                {"group_id", r.group_id}};
}

TrainingRecord training_record_from_json(const Json& j) {
    try {
        TrainingRecord r;
        r.prompt = j.at("prompt").get<std::string>();
        r.response = j.at("response").get<std::string>();
        r.old_logprobs = j.at("old_logprobs").get<std::vector<double>>();
        r.advantage = j.at("advantage").get<double>();
        r.group_id = j.at("group_id").get<std::string>();
        if (r.old_logprobs.empty()) throw ValidationError("training record without tokens");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed training record: ") + e.what());
    }
}

std::vector<TrainingRecord> read_batch(const std::filesystem::path& path) {
    std::vector<TrainingRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(training_record_from_json(j));
    return out;
}

void write_batch(const std::filesystem::path& path, std::span<const TrainingRecord> records) {
    std::vector<Json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    write_jsonl(path, rows);
}

double surrogate_loss(std::span<const TrainingRecord> records, std::span<const std::vector<double>> new_logprobs,
                      double clip_eps) {
    check_lengths(records, new_logprobs);
    if (records.empty()) throw ContractError("loss over an empty batch");
    if (!(clip_eps >= 0.0)) throw ContractError("clip_eps must be non-negative");
    double total = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const double a = rec.advantage;
        double sum = 0.0;
        for (std::size_t t = 0; t < rec.old_logprobs.size(); ++t) {
            const double ratio = std::exp(new_logprobs[i][t] - rec.old_logprobs[t]);
            sum += std::min(ratio * a, clip(ratio, clip_eps) * a);
        }
        total += sum / static_cast<double>(rec.old_logprobs.size());
    }
    return -total / static_cast<double>(records.size());
}

std::vector<std::vector<double>> surrogate_loss_gradient(std::span<const TrainingRecord> records,
                                                         std::span<const std::vector<double>> new_logprobs,
                                                         double clip_eps) {
    check_lengths(records, new_logprobs);
    if (records.empty()) throw ContractError("loss over an empty batch");
    const double n = static_cast<double>(records.size());
    std::vector<std::vector<double>> grad(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const double a = rec.advantage;
        const double len = static_cast<double>(rec.old_logprobs.size());
        grad[i].resize(rec.old_logprobs.size());
        for (std::size_t t = 0; t < rec.old_logprobs.size(); ++t) {
            const double ratio = std::exp(new_logprobs[i][t] - rec.old_logprobs[t]);
            // The unclipped branch carries the gradient whenever it is the smaller one.
            const bool unclipped_active = ratio * a <= clip(ratio, clip_eps) * a;
            grad[i][t] = unclipped_active ? -(ratio * a) / (len * n) : 0.0;
        }
    }
    return grad;
}

RewardedTree score_tree(RolloutTree tree, ModelClient& judge, double gamma, FutureCredit credit) {
    RewardedTree out;
    for (const auto& g : tree.initial) out.immediate.initial.push_back(immediate_reward(judge, g.summary, tree.instance.target1));
    for (const auto& g : tree.updated) out.immediate.updated.push_back(immediate_reward(judge, g.summary, tree.instance.target2));
    out.cumulative = cumulative_rewards(tree.selected_index, out.immediate, gamma, credit);
    out.advantage.initial = advantages(out.cumulative.initial);
    out.advantage.updated = advantages(out.cumulative.updated);
    out.tree = std::move(tree);
    return out;
}

std::vector<TrainingRecord> export_batch(std::span<const RewardedTree> trees) {
    std::vector<TrainingRecord> out;
    for (const auto& rt : trees) {
        const auto& inst = rt.tree.instance;
        const std::string base = inst.user_id + ":" + std::to_string(inst.k1) + ":" + std::to_string(inst.k2);
        auto emit = [&](const std::vector<GenerationResult>& set, const std::vector<double>& adv, const char* name) {
            if (adv.size() != set.size()) throw ContractError("advantages missing for " + base);
            for (std::size_t i = 0; i < set.size(); ++i) {
                if (!set[i].token_logprobs || set[i].token_logprobs->empty()) {
                    throw ContractError("summary without token logprobs in " + base);
                }
                out.push_back({set[i].prompt, set[i].completion, *set[i].token_logprobs, adv[i], base + ":" + name});
            }
        };
        emit(rt.tree.initial, rt.advantage.initial, "initial");
        emit(rt.tree.updated, rt.advantage.updated, "updated");
    }
    return out;
}

std::vector<RewardedTree> run_rollouts(std::span<const RlInstance> instances, const std::vector<UserHistory>& histories,
                                       ModelClient& policy, ModelClient& judge, const RolloutConfig& config,
                                       std::size_t jobs, Telemetry& telemetry) {
    std::unordered_map<std::string, const UserHistory*> by_user;
    for (const auto& h : histories) by_user.emplace(h.user_id, &h);

    std::vector<std::optional<RewardedTree>> slots(instances.size());
    parallel_for(instances.size(), jobs, [&](std::size_t i) {
        const auto& inst = instances[i];
        const auto it = by_user.find(inst.user_id);
        if (it == by_user.end()) throw ValidationError("no history for RL instance user " + inst.user_id);
        const auto seed = derive_seed(config.seed, inst.user_id + ":" + std::to_string(inst.k1) + ":" +
                                                       std::to_string(inst.k2));
        auto tree = rollout(policy, inst, *it->second, config.group_size, seed);
        if (is_skip(tree)) {
            telemetry.count("skipped_instances");
            telemetry.note(std::get<UserSkip>(tree).reason);
            return;
        }
        try {
            slots[i] = score_tree(std::move(std::get<RolloutTree>(tree)), judge, config.gamma, config.credit);
        } catch (const JudgeError& e) {
            telemetry.count("skipped_instances");
            telemetry.note("reward for " + inst.user_id + " failed: " + e.what());
            return;
        } catch (const BackendError& e) {
            telemetry.count("skipped_instances");
            telemetry.note("reward for " + inst.user_id + " failed: " + e.what());
            return;
        }
        telemetry.count("trees");
    });
    std::vector<RewardedTree> out;
    for (auto& s : slots) {
        if (s) out.push_back(std::move(*s));
    }
    double mean_reward = 0.0;
    std::size_t n = 0;
    for (const auto& t : out) {
        for (const auto* set : {&t.immediate.initial, &t.immediate.updated}) {
            for (double r : *set) mean_reward += r;
            n += set->size();
        }
    }
    if (n) spdlog::info("{} rollout trees, mean immediate reward {:.4f}", out.size(), mean_reward / n);
    return out;
}

} // namespace prefstream
