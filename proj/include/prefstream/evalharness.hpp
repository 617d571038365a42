#pragma once

#include "prefstream/core.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/prompts.hpp"
#include "prefstream/telemetry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prefstream {

/// One selection question: which of two items does this user prefer?
struct EvalInstance {
    std::string user_id;
    std::optional<std::string> context;
    std::string chosen;
    std::string rejected;
};

/// Rows {user_id, context?, chosen, rejected}; transfer instances
/// {history_ref, target:{...}} are accepted and keyed by history_ref.
std::vector<EvalInstance> read_eval_instances(const std::filesystem::path& path);

/// Final summary text per user from stream states, synthesis records or
/// {user_id, text} rows. Later rows for the same user win.
std::map<std::string, std::string> read_summaries(const std::filesystem::path& path);

struct EvalOptions {
    std::uint64_t seed = 0;
    bool randomize_positions = true;
    std::string dataset_tag;
};

struct InstanceOutcome {
    std::string user_id;
    bool swapped = false;               // chosen item shown as Item B
    std::optional<std::string> reply;   // absent when the backend failed or no summary existed
    std::string failure;                // why there is no reply
    std::optional<Selection> parsed;
    bool correct = false;
};

struct EvalReport {
    std::string dataset_tag;
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::size_t parse_failures = 0;
    std::size_t backend_failures = 0;
    std::size_t missing_summaries = 0;
    std::size_t predicted_a = 0;
    std::size_t predicted_b = 0;
    bool strict = true;
    std::vector<InstanceOutcome> details;
};

Json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const Json& j);
std::string format_report(const EvalReport& r, std::string_view title = {});

/// Judges every instance once. Parse failures and backend failures count as incorrect.
EvalReport evaluate_selection(std::span<const EvalInstance> instances,
                              const std::map<std::string, std::string>& summaries, ModelClient& downstream,
                              const EvalOptions& options = {}, std::size_t jobs = 1, Telemetry* telemetry = nullptr);

/// Rebuilds counts from the stored replies.
EvalReport rescore(const EvalReport& report);

struct ProtocolComparison {
    EvalReport full;
    EvalReport streaming;
    std::map<std::string, std::string> full_summaries;
    std::map<std::string, std::string> streaming_summaries;
};

/// Full-history against streaming summaries (num_chunks, default 2) on the same instances.
ProtocolComparison compare_protocols(const std::vector<UserHistory>& histories,
                                     std::span<const EvalInstance> instances, ModelClient& generator,
                                     ModelClient& downstream, const EvalOptions& options = {},
                                     std::size_t num_chunks = 2, std::size_t jobs = 1,
                                     Telemetry* telemetry = nullptr);

} // namespace prefstream
