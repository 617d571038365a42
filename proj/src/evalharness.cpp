#include "prefstream/evalharness.hpp"

#include "prefstream/hashing.hpp"
#include "prefstream/mock_backend.hpp"
#include "prefstream/parallel.hpp"
#include "prefstream/streamer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace prefstream {

namespace {

std::optional<std::string> optional_string(const Json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    auto s = j[key].get<std::string>();
    if (s.empty()) return std::nullopt;
    return s;
}

std::uint64_t instance_key(std::uint64_t seed, const EvalInstance& inst) {
    std::uint64_t h = fnv1a64(inst.user_id);
    h = fnv1a64(inst.context.value_or(""), h ^ 0x9e3779b97f4a7c15ULL);
    h = fnv1a64(inst.chosen, h);
    h = fnv1a64(inst.rejected, h);
    return derive_seed(seed, h);
}

void tally(EvalReport& r) {
    r.n = r.details.size();
    r.correct = r.parse_failures = r.backend_failures = r.missing_summaries = r.predicted_a = r.predicted_b = 0;
    for (const auto& d : r.details) {
        if (!d.reply) {
            if (d.failure == "missing summary") ++r.missing_summaries;
            else ++r.backend_failures;
            continue;
        }
        if (!d.parsed) {
            ++r.parse_failures;
            continue;
        }
        (*d.parsed == Selection::A ? r.predicted_a : r.predicted_b) += 1;
        if (d.correct) ++r.correct;
    }
    r.accuracy = r.n ? static_cast<double>(r.correct) / static_cast<double>(r.n) : 0.0;
}

void score_reply(InstanceOutcome& d, bool strict) {
    d.parsed.reset();
    d.correct = false;
    if (!d.reply) return;
    d.parsed = parse_selection(split_reasoning(*d.reply).summary, strict);
    if (d.parsed) d.correct = (*d.parsed == Selection::B) == d.swapped;
}

} // namespace

std::vector<EvalInstance> read_eval_instances(const std::filesystem::path& path) {
    std::vector<EvalInstance> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            EvalInstance inst;
            const Json* src = &j;
            if (j.contains("history_ref")) {
                inst.user_id = j.at("history_ref").get<std::string>();
                src = &j.at("target");
            } else {
                inst.user_id = j.at("user_id").get<std::string>();
            }
            inst.context = optional_string(*src, "context");
            inst.chosen = src->at("chosen").get<std::string>();
            inst.rejected = src->at("rejected").get<std::string>();
            if (inst.chosen.empty() || inst.rejected.empty() || inst.chosen == inst.rejected) {
                throw ValidationError("instance items must be non-empty and distinct");
            }
            out.push_back(std::move(inst));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

std::map<std::string, std::string> read_summaries(const std::filesystem::path& path) {
    std::map<std::string, std::string> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            const auto user = j.at("user_id").get<std::string>();
            std::string text;
            if (j.contains("summary") && j["summary"].is_string()) text = j["summary"].get<std::string>();
            else if (j.contains("summary") && j["summary"].is_object()) text = j["summary"].at("text").get<std::string>();
            else if (j.contains("text")) text = j["text"].get<std::string>();
            else if (j.contains("summary") && j["summary"].is_null()) continue;
            else throw ValidationError("row has no summary text");
            out[user] = std::move(text);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

Json to_json(const EvalReport& r) {
    Json details = Json::array();
    for (const auto& d : r.details) {
        Json row{{"user_id", d.user_id}, {"swapped", d.swapped}, {"correct", d.correct}};
        row["reply"] = d.reply ? Json(*d.reply) : Json(nullptr);
        if (!d.failure.empty()) row["failure"] = d.failure;
        row["selection"] = d.parsed ? Json(*d.parsed == Selection::A ? "A" : "B") : Json(nullptr);
        details.push_back(std::move(row));
    }
    return Json{{"dataset_tag", r.dataset_tag},
                {"n", r.n},
                {"correct", r.correct},
                {"accuracy", r.accuracy},
                {"parse_failures", r.parse_failures},
                {"backend_failures", r.backend_failures},
                {"missing_summaries", r.missing_summaries},
                {"predicted_a", r.predicted_a},
                {"predicted_b", r.predicted_b},
                {"strict", r.strict},
                {"details", std::move(details)}};
}

EvalReport eval_report_from_json(const Json& j) {
    try {
        EvalReport r;
        r.dataset_tag = j.value("dataset_tag", std::string{});
        r.n = j.at("n").get<std::size_t>();
        r.correct = j.at("correct").get<std::size_t>();
        r.accuracy = j.at("accuracy").get<double>();
        r.parse_failures = j.at("parse_failures").get<std::size_t>();
        r.backend_failures = j.value("backend_failures", std::size_t{0});
        r.missing_summaries = j.value("missing_summaries", std::size_t{0});
        r.predicted_a = j.value("predicted_a", std::size_t{0});
        r.predicted_b = j.value("predicted_b", std::size_t{0});
        r.strict = j.value("strict", true);
        for (const auto& row : j.at("details")) {
            InstanceOutcome d;
            d.user_id = row.at("user_id").get<std::string>();
            d.swapped = row.at("swapped").get<bool>();
            d.correct = row.at("correct").get<bool>();
            if (!row.at("reply").is_null()) d.reply = row["reply"].get<std::string>();
            d.failure = row.value("failure", std::string{});
            if (!row.at("selection").is_null()) d.parsed = row["selection"] == "A" ? Selection::A : Selection::B;
            r.details.push_back(std::move(d));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed evaluation report: ") + e.what());
    }
}

std::string format_report(const EvalReport& r, std::string_view title) {
    std::string out;
    if (!title.empty()) out += fmt::format("{}\n", title);
    out += fmt::format("{:<18} {:>10}\n", "dataset", r.dataset_tag.empty() ? "-" : r.dataset_tag);
    out += fmt::format("{:<18} {:>10}\n", "instances", r.n);
    out += fmt::format("{:<18} {:>10}\n", "correct", r.correct);
    out += fmt::format("{:<18} {:>9.2f}%\n", "accuracy", 100.0 * r.accuracy);
    out += fmt::format("{:<18} {:>10}\n", "parse failures", r.parse_failures);
    out += fmt::format("{:<18} {:>10}\n", "backend failures", r.backend_failures);
    out += fmt::format("{:<18} {:>10}\n", "missing summaries", r.missing_summaries);
    out += fmt::format("{:<18} {:>5} / {:<4}\n", "picked A / B", r.predicted_a, r.predicted_b);
    return out;
}

EvalReport evaluate_selection(std::span<const EvalInstance> instances,
                              const std::map<std::string, std::string>& summaries, ModelClient& downstream,
                              const EvalOptions& options, std::size_t jobs, Telemetry* telemetry) {
    if (instances.empty()) throw ContractError("nothing to evaluate");
    EvalReport report;
    report.dataset_tag = options.dataset_tag;
    report.strict = downstream.endpoint().strict_selection;
    report.details.resize(instances.size());
    const auto& marker = downstream.endpoint().empty_marker;

    parallel_for(instances.size(), jobs, [&](std::size_t i) {
        const auto& inst = instances[i];
        auto& d = report.details[i];
        d.user_id = inst.user_id;
        const auto key = instance_key(options.seed, inst);
        d.swapped = options.randomize_positions && unit_interval(key) < 0.5;
        const auto it = summaries.find(inst.user_id);
        if (it == summaries.end()) {
            d.failure = "missing summary";
            return;
        }
        const std::string& a = d.swapped ? inst.rejected : inst.chosen;
        const std::string& b = d.swapped ? inst.chosen : inst.rejected;
        std::optional<std::string_view> ctx;
        if (inst.context) ctx = *inst.context;
        try {
            d.reply = downstream.complete(render_judge_prompt(ctx, it->second, a, b, marker), derive_seed(key, "reply"));
        } catch (const BackendError& e) {
            d.failure = e.what();
            if (telemetry) telemetry->note("evaluation of " + inst.user_id + " failed: " + e.what());
        }
        score_reply(d, report.strict);
    });
    tally(report);
    if (telemetry) {
        telemetry->count("evaluated", static_cast<std::int64_t>(report.n));
        telemetry->count("parse_failures", static_cast<std::int64_t>(report.parse_failures));
    }
    return report;
}

EvalReport rescore(const EvalReport& report) {
    EvalReport out = report;
    for (auto& d : out.details) score_reply(d, out.strict);
    tally(out);
    return out;
}

ProtocolComparison compare_protocols(const std::vector<UserHistory>& histories,
                                     std::span<const EvalInstance> instances, ModelClient& generator,
                                     ModelClient& downstream, const EvalOptions& options, std::size_t num_chunks,
                                     std::size_t jobs, Telemetry* telemetry) {
    std::vector<std::optional<std::string>> full(histories.size());
    std::vector<std::optional<std::string>> streaming(histories.size());
    parallel_for(histories.size(), jobs, [&](std::size_t i) {
        const auto& h = histories[i];
        try {
            full[i] = infer_full(generator, h).text;
        } catch (const Error& e) {
            if (telemetry) telemetry->note("full-history inference for " + h.user_id + " failed: " + e.what());
        }
        try {
            streaming[i] = infer_streaming(generator, h, std::min(num_chunks, h.size())).current->text;
        } catch (const Error& e) {
            if (telemetry) telemetry->note("streaming inference for " + h.user_id + " failed: " + e.what());
        }
    });
    ProtocolComparison out;
    for (std::size_t i = 0; i < histories.size(); ++i) {
        if (full[i]) out.full_summaries[histories[i].user_id] = *full[i];
        if (streaming[i]) out.streaming_summaries[histories[i].user_id] = *streaming[i];
    }
    out.full = evaluate_selection(instances, out.full_summaries, downstream, options, jobs, telemetry);
    out.streaming = evaluate_selection(instances, out.streaming_summaries, downstream, options, jobs, telemetry);
    spdlog::info("full-history accuracy {:.4f}, streaming accuracy {:.4f}", out.full.accuracy, out.streaming.accuracy);
    return out;
}

} // namespace prefstream
