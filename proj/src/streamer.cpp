#include "prefstream/streamer.hpp"

#include "prefstream/parallel.hpp"
#include "prefstream/prompts.hpp"

#include <spdlog/spdlog.h>

namespace prefstream {

Json to_json(const StreamState& s) {
    Json j{{"user_id", s.user_id}, {"frontier", s.consumed_until}, {"lineage", s.lineage}};
    j["summary"] = s.current ? to_json(*s.current) : Json(nullptr);
    return j;
}

StreamState stream_state_from_json(const Json& j) {
    try {
        StreamState s;
        s.user_id = j.at("user_id").get<std::string>();
        s.consumed_until = j.at("frontier").get<std::size_t>();
        s.lineage = j.at("lineage").get<std::vector<std::string>>();
        if (j.contains("summary") && !j["summary"].is_null()) s.current = summary_from_json(j["summary"]);
        if (s.current && s.current->covers.end != s.consumed_until) {
            throw ValidationError("state of " + s.user_id + ": frontier does not match the summary's coverage");
        }
        if (s.current.has_value() != !s.lineage.empty() || (s.current && s.lineage.back() != s.current->id)) {
            throw ValidationError("state of " + s.user_id + ": lineage does not end at the current summary");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed stream state: ") + e.what());
    }
}

StreamState update(ModelClient& generator, const UserHistory& history, const StreamState& state,
                   HistorySegment new_segment, std::uint64_t seed) {
    if (!state.user_id.empty() && state.user_id != history.user_id) {
        throw ContractError("state belongs to " + state.user_id + ", history to " + history.user_id);
    }
    if (new_segment.start != state.consumed_until) {
        throw ContractError("segment starts at " + std::to_string(new_segment.start) + " but the frontier is " +
                            std::to_string(state.consumed_until));
    }
    if (new_segment.end <= new_segment.start || new_segment.end > history.size()) {
        throw ContractError("segment [" + std::to_string(new_segment.start) + "," + std::to_string(new_segment.end) +
                            ") is empty or past the history end");
    }
    const auto& marker = generator.endpoint().empty_marker;
    GenerationResult result;
    try {
        result = generator.generate_summary(state.current, render_history(slice(history, new_segment), marker), {seed, false});
    } catch (const Error& e) {
        throw InferenceError("inference for " + history.user_id + " failed at [" + std::to_string(new_segment.start) +
                                 "," + std::to_string(new_segment.end) + "): " + e.what(),
                             state);
    }
    StreamState next;
    next.user_id = history.user_id;
    next.current = make_summary(std::move(result.summary), std::move(result.reasoning),
                                state.current ? std::optional(state.current->id) : std::nullopt, new_segment,
                                generator.token_counter().count(result.completion));
    next.consumed_until = new_segment.end;
    next.lineage = state.lineage;
    next.lineage.push_back(next.current->id);
    return next;
}

PreferenceSummary infer_full(ModelClient& generator, const UserHistory& history, std::uint64_t seed) {
    if (history.triples.empty()) throw ContractError("cannot summarize an empty history");
    StreamState start;
    start.user_id = history.user_id;
    return *update(generator, history, start, {0, history.size()}, seed).current;
}

StreamState infer_streaming_at(ModelClient& generator, const UserHistory& history,
                               std::span<const std::size_t> boundaries, std::uint64_t seed) {
    if (boundaries.empty() || boundaries.back() != history.size()) {
        throw ContractError("chunk boundaries must end at the history length");
    }
    const auto segments = segment(history, boundaries);
    StreamState state;
    state.user_id = history.user_id;
    for (const auto& seg : segments) state = update(generator, history, state, seg, seed);
    return state;
}

StreamState infer_streaming(ModelClient& generator, const UserHistory& history, std::size_t num_chunks,
                            std::uint64_t seed) {
    if (num_chunks == 0 || num_chunks > history.size()) {
        throw ContractError("cannot split " + std::to_string(history.size()) + " interactions into " +
                            std::to_string(num_chunks) + " chunks");
    }
    const auto boundaries = near_equal_boundaries(history.size(), num_chunks);
    return infer_streaming_at(generator, history, boundaries, seed);
}

std::map<std::string, StreamState> load_states(const std::filesystem::path& path) {
    std::map<std::string, StreamState> out;
    if (!std::filesystem::exists(path)) return out;
    for (const auto& j : read_jsonl(path)) {
        auto s = stream_state_from_json(j);
        const auto id = s.user_id;
        if (!out.emplace(id, std::move(s)).second) throw ValidationError("duplicate state for user " + id);
    }
    return out;
}

void save_states(const std::filesystem::path& path, const std::map<std::string, StreamState>& states) {
    std::vector<Json> rows;
    rows.reserve(states.size());
    for (const auto& [_, s] : states) rows.push_back(to_json(s));
    write_jsonl(path, rows);
}

std::map<std::string, StreamState> stream_users(const std::vector<UserHistory>& histories, ModelClient& generator,
                                                std::size_t num_chunks, std::map<std::string, StreamState> states,
                                                std::size_t jobs, Telemetry& telemetry) {
    std::vector<StreamState> results(histories.size());
    parallel_for(histories.size(), jobs, [&](std::size_t i) {
        const auto& h = histories[i];
        const auto it = states.find(h.user_id);
        try {
            if (it == states.end() || !it->second.current) {
                results[i] = infer_streaming(generator, h, std::min(num_chunks, h.size()));
            } else if (it->second.consumed_until < h.size()) {
                results[i] = update(generator, h, it->second, {it->second.consumed_until, h.size()});
            } else {
                if (it->second.consumed_until > h.size()) {
                    throw ValidationError("stored frontier for " + h.user_id + " is past the history end");
                }
                results[i] = it->second;
            }
        } catch (const InferenceError& e) {
            telemetry.count("failed_users");
            telemetry.note(e.what());
            results[i] = e.partial;
        }
    });
    for (std::size_t i = 0; i < histories.size(); ++i) {
        if (results[i].current) states[histories[i].user_id] = std::move(results[i]);
    }
    spdlog::info("streamed {} users", histories.size());
    return states;
}

} // namespace prefstream
