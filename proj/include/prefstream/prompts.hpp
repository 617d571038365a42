#pragma once

#include "prefstream/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prefstream {

inline constexpr std::string_view kDefaultEmptyMarker = "None";
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

// Section headers of the preference-generation template.
inline constexpr std::string_view kPastSummaryHeader = "=====Past Preference Summary=====";
inline constexpr std::string_view kHistoryHeader = "=====Interaction History=====";
inline constexpr std::string_view kTargetHeader = "=====Target Interaction=====";
inline constexpr std::string_view kEndHeader = "=====END=====";

/// "(QUERY, CHOSEN, REJECTED)" with absent fields replaced by the empty marker.
std::string render_triple(const InteractionTriple& t, std::string_view empty_marker = kDefaultEmptyMarker);

/// One rendered triple per line; the empty marker when there are none.
std::string render_history(std::span<const InteractionTriple> triples,
                           std::string_view empty_marker = kDefaultEmptyMarker);

/// The preference-generation template. A missing prior renders as the empty marker.
std::string render_generation_prompt(std::optional<std::string_view> prior_summary, std::string_view history_text,
                                     std::string_view empty_marker = kDefaultEmptyMarker);

/// Generation prompt anchored on one unlabeled target. Candidates are listed in
/// lexicographic order so the prompt carries no trace of which one was chosen.
std::string render_target_prompt(std::optional<std::string_view> prior_summary, std::string_view history_text,
                                  const InteractionTriple& target,
                                  std::string_view empty_marker = kDefaultEmptyMarker);

struct MergeCandidate {
    std::string reasoning;
    std::string summary;
};

std::string render_merge_prompt(std::span<const MergeCandidate> candidates);

/// The downstream selection template.
std::string render_judge_prompt(std::optional<std::string_view> context, std::string_view persona,
                                std::string_view item_a, std::string_view item_b,
                                std::string_view empty_marker = kDefaultEmptyMarker);

enum class Selection { A, B };

std::string selection_reply(Selection s);

/// Parses {"selection": "Item A"|"Item B"}. Strict mode tolerates only surrounding
/// whitespace and a code fence; lenient mode also accepts a bare "Item A"/"Item B" mention.
std::optional<Selection> parse_selection(std::string_view reply, bool strict = true);

struct ReasonedText {
    std::optional<std::string> reasoning;
    std::string summary;
};

/// Splits a completion at the reasoning delimiters. Without a closing marker the
/// whole completion is the summary.
ReasonedText split_reasoning(std::string_view completion, std::string_view open = kThinkOpen,
                             std::string_view close = kThinkClose);

// Recognizers used by scripted backends to route a request.
enum class PromptKind { Generation, TargetedGeneration, Merge, Judge, Unknown };

PromptKind classify_prompt(std::string_view prompt);

struct GenerationSections {
    std::string past_summary;
    std::string history;
    std::optional<std::string> target;
};
std::optional<GenerationSections> parse_generation_prompt(std::string_view prompt);

struct JudgeSections {
    std::string context;
    std::string persona;
    std::string item_a;
    std::string item_b;
};
std::optional<JudgeSections> parse_judge_prompt(std::string_view prompt);

std::vector<MergeCandidate> parse_merge_prompt(std::string_view prompt);

std::string trim(std::string_view s);

} // namespace prefstream
