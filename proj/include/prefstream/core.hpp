#pragma once

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prefstream {

using Json = nlohmann::json;

// One preference event: the user preferred `chosen` over `rejected` in `context`.
struct InteractionTriple {
    std::int64_t index = 0;
    std::optional<std::string> context;
    std::string chosen;
    std::optional<std::string> rejected;

    bool is_paired() const { return rejected.has_value(); }
    bool operator==(const InteractionTriple&) const = default;
};

struct UserHistory {
    std::string user_id;
    std::string dataset_tag;
    std::vector<InteractionTriple> triples;  // strictly increasing by index

    std::size_t size() const { return triples.size(); }
    bool operator==(const UserHistory&) const = default;
};

/// Half-open positional range [start, end) over a history's triples.
struct HistorySegment {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool operator==(const HistorySegment&) const = default;
};

struct PreferenceSummary {
    std::string id;
    std::string text;
    std::optional<std::string> reasoning;
    std::optional<std::string> parent_id;
    HistorySegment covers;
    std::size_t token_count = 0;

    bool operator==(const PreferenceSummary&) const = default;
};

/// Builds a summary and assigns its content-derived id.
PreferenceSummary make_summary(std::string text, std::optional<std::string> reasoning,
                               std::optional<std::string> parent_id, HistorySegment covers,
                               std::size_t token_count);

/// Throws ValidationError when the history breaks a type invariant.
void validate(const UserHistory& history);

/// Splits [0, boundaries.back()) at the given strictly increasing boundaries.
std::vector<HistorySegment> segment(const UserHistory& history, std::span<const std::size_t> boundaries);

/// `parts` contiguous chunk boundaries over n items; the remainder goes to the last chunk.
std::vector<std::size_t> near_equal_boundaries(std::size_t n, std::size_t parts);

/// Drops every rejected item, keeping everything else.
UserHistory strip_negatives(const UserHistory& history);

std::span<const InteractionTriple> slice(const UserHistory& history, HistorySegment seg);

/// Position of the triple carrying `index`, if any.
std::optional<std::size_t> position_of(const UserHistory& history, std::int64_t index);

/// Reports items that occur more than once in a history. Duplicates are legal; this is a lint.
std::vector<std::string> lint_duplicates(const UserHistory& history);

// JSON mapping used by every JSONL file in the project.
Json to_json(const InteractionTriple& t);
Json to_json(const UserHistory& h);
Json to_json(const HistorySegment& s);
Json to_json(const PreferenceSummary& s);
InteractionTriple triple_from_json(const Json& j);
UserHistory history_from_json(const Json& j);
HistorySegment segment_from_json(const Json& j);
PreferenceSummary summary_from_json(const Json& j);

// JSONL helpers. Writes go through a temp file and a rename.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

std::vector<UserHistory> read_histories(const std::filesystem::path& path);
void write_histories(const std::filesystem::path& path, const std::vector<UserHistory>& histories);

} // namespace prefstream
