#pragma once

#include "prefstream/core.hpp"
#include "prefstream/error.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/telemetry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prefstream {

/// Where one user's streaming profile stands. `lineage` lists summary ids from
/// the first chunk through `current`.
struct StreamState {
    std::string user_id;
    std::optional<PreferenceSummary> current;
    std::size_t consumed_until = 0;  // history position; equals current->covers.end
    std::vector<std::string> lineage;

    bool operator==(const StreamState&) const = default;
};

Json to_json(const StreamState& s);
StreamState stream_state_from_json(const Json& j);

/// A failed inference step. `partial` holds the state reached before the failure.
class InferenceError : public Error {
public:
    InferenceError(const std::string& what, StreamState partial) : Error(what), partial(std::move(partial)) {}
    StreamState partial;
};

/// Summarizes `new_segment` on top of the state's current summary. The segment
/// must start at the frontier; nothing before it is rendered.
StreamState update(ModelClient& generator, const UserHistory& history, const StreamState& state,
                   HistorySegment new_segment, std::uint64_t seed = 0);

/// One pass over the whole history.
PreferenceSummary infer_full(ModelClient& generator, const UserHistory& history, std::uint64_t seed = 0);

/// Near-equal chunks summarized in order, each on top of the previous summary.
StreamState infer_streaming(ModelClient& generator, const UserHistory& history, std::size_t num_chunks,
                            std::uint64_t seed = 0);

/// Streaming over explicit chunk boundaries (strictly increasing, last = history length).
StreamState infer_streaming_at(ModelClient& generator, const UserHistory& history,
                               std::span<const std::size_t> boundaries, std::uint64_t seed = 0);

/// States keyed by user id, one JSONL row per user.
std::map<std::string, StreamState> load_states(const std::filesystem::path& path);
void save_states(const std::filesystem::path& path, const std::map<std::string, StreamState>& states);

/// Advances every user: users without a stored state stream over `num_chunks`
/// chunks; users with one get a single update over their unseen interactions.
/// Users whose inference fails keep their partial state and are counted.
std::map<std::string, StreamState> stream_users(const std::vector<UserHistory>& histories, ModelClient& generator,
                                                std::size_t num_chunks, std::map<std::string, StreamState> states,
                                                std::size_t jobs, Telemetry& telemetry);

} // namespace prefstream
