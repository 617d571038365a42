#include "prefstream/prompts.hpp"

#include "prefstream/error.hpp"

#include <algorithm>

namespace prefstream {

namespace {

constexpr std::string_view kGenerationPreamble =
    "Analyze the past preference summary and the following user interaction history to summarize the "
    "comprehensive user preferences in concise language. If past preferences are provided, adjust the "
    "preferences by combining past preferences with those reflected in current behavior, removing conflicting "
    "parts, and integrating new insights. If no past preferences are provided, derive the final preferences "
    "solely from user behavior. The user's history will be provided as a sequence of triples, where each "
    "triple is (QUERY, CHOSEN ITEM BY THE USER, REJECTED ITEM BY THE USER).";

constexpr std::string_view kGenerationClosing =
    "Now, given the above user's past preference summary and the interaction history, summarize the user "
    "preferences.";

constexpr std::string_view kTargetClosing =
    "Focus on the preferences that explain how the user would choose between the candidate items of the "
    "target interaction.";

constexpr std::string_view kMergePreamble =
    "Merge the following preference summaries, each derived for the same user, into a single, comprehensive "
    "summary of the user's preferences. Synthesize a non-redundant and holistic view of the user's preferences: "
    "keep every distinct preference supported by the candidates and remove repetition. Reason over the "
    "candidates and their reasoning first, then write the merged summary.";

constexpr std::string_view kMergeCandidatePrefix = "=====Candidate ";

constexpr std::string_view kJudgePreamble =
    "Determine which response the user prefers based on the user's preferences. Please output your selection "
    "below in a json format by filling in the placeholders in []: {\"selection\": \"[Item A / Item B]\"}";

constexpr std::string_view kJudgeClosing =
    "Now, ONLY output your selection without any other text outside of this specified structure.";

std::string_view between(std::string_view text, std::string_view open, std::string_view close,
                         std::size_t from = 0) {
    auto a = text.find(open, from);
    if (a == std::string_view::npos) return {};
    a += open.size();
    auto b = text.find(close, a);
    if (b == std::string_view::npos) return {};
    return text.substr(a, b - a);
}

} // namespace

std::string trim(std::string_view s) {
    const char* ws = " \t\n\r\f\v";
    auto a = s.find_first_not_of(ws);
    if (a == std::string_view::npos) return {};
    auto b = s.find_last_not_of(ws);
    return std::string(s.substr(a, b - a + 1));
}

std::string render_triple(const InteractionTriple& t, std::string_view empty_marker) {
    std::string out = "(";
    out += t.context ? std::string_view(*t.context) : empty_marker;
    out += ", ";
    out += t.chosen;
    out += ", ";
    out += t.rejected ? std::string_view(*t.rejected) : empty_marker;
    out += ")";
    return out;
}

std::string render_history(std::span<const InteractionTriple> triples, std::string_view empty_marker) {
    if (triples.empty()) return std::string(empty_marker);
    std::string out;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        if (i) out += '\n';
        out += render_triple(triples[i], empty_marker);
    }
    return out;
}

namespace {

std::string generation_body(std::optional<std::string_view> prior_summary, std::string_view history_text,
                            std::string_view empty_marker) {
    std::string out(kGenerationPreamble);
    out += "\n\n";
    out += kPastSummaryHeader;
    out += '\n';
    out += prior_summary ? *prior_summary : empty_marker;
    out += "\n\n";
    out += kHistoryHeader;
    out += '\n';
    out += history_text;
    return out;
}

} // namespace

std::string render_generation_prompt(std::optional<std::string_view> prior_summary, std::string_view history_text,
                                     std::string_view empty_marker) {
    std::string out = generation_body(prior_summary, history_text, empty_marker);
    out += "\n\n";
    out += kEndHeader;
    out += "\n\n";
    out += kGenerationClosing;
    return out;
}

std::string render_target_prompt(std::optional<std::string_view> prior_summary, std::string_view history_text,
                                 const InteractionTriple& target, std::string_view empty_marker) {
    if (!target.rejected) throw ContractError("target interactions must carry both candidate items");
    std::string first = target.chosen;
    std::string second = *target.rejected;
    if (second < first) std::swap(first, second);

    std::string out = generation_body(prior_summary, history_text, empty_marker);
    out += "\n\n";
    out += kTargetHeader;
    out += "\nQUERY: ";
    out += target.context ? std::string_view(*target.context) : empty_marker;
    out += "\nCANDIDATE 1: ";
    out += first;
    out += "\nCANDIDATE 2: ";
    out += second;
    out += "\n\n";
    out += kEndHeader;
    out += "\n\n";
    out += kGenerationClosing;
    out += ' ';
    out += kTargetClosing;
    return out;
}

std::string render_merge_prompt(std::span<const MergeCandidate> candidates) {
    std::string out(kMergePreamble);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out += "\n\n";
        out += kMergeCandidatePrefix;
        out += std::to_string(i + 1);
        out += "=====\nReasoning:\n";
        out += candidates[i].reasoning;
        out += "\nSummary:\n";
        out += candidates[i].summary;
    }
    out += "\n\n";
    out += kEndHeader;
    return out;
}

std::string render_judge_prompt(std::optional<std::string_view> context, std::string_view persona,
                                std::string_view item_a, std::string_view item_b, std::string_view empty_marker) {
    std::string out(kJudgePreamble);
    out += "\n\n<Prompt>\n";
    out += context ? *context : empty_marker;
    out += "\n</Prompt>\n\n<Preference>\n";
    out += persona;
    out += "\n</Preference>\n\n<Item A>\n";
    out += item_a;
    out += "\n</Item A>\n\n<Item B>\n";
    out += item_b;
    out += "\n</Item B>\n\n";
    out += kJudgeClosing;
    return out;
}

std::string selection_reply(Selection s) {
    return s == Selection::A ? R"({"selection": "Item A"})" : R"({"selection": "Item B"})";
}

std::optional<Selection> parse_selection(std::string_view reply, bool strict) {
    std::string body = trim(reply);
    if (body.rfind("```", 0) == 0) {
        auto nl = body.find('\n');
        auto close = body.rfind("```");
        if (nl != std::string::npos && close != std::string::npos && close > nl) {
            body = trim(std::string_view(body).substr(nl + 1, close - nl - 1));
        }
    }
    try {
        auto j = Json::parse(body);
        if (j.is_object() && j.size() == 1 && j.contains("selection") && j["selection"].is_string()) {
            const auto& v = j["selection"].get_ref<const std::string&>();
            if (v == "Item A") return Selection::A;
            if (v == "Item B") return Selection::B;
        }
    } catch (const nlohmann::json::exception&) {
    }
    if (strict) return std::nullopt;
    const bool has_a = reply.find("Item A") != std::string_view::npos;
    const bool has_b = reply.find("Item B") != std::string_view::npos;
    if (has_a != has_b) return has_a ? Selection::A : Selection::B;
    return std::nullopt;
}

ReasonedText split_reasoning(std::string_view completion, std::string_view open, std::string_view close) {
    auto close_at = completion.find(close);
    if (close_at == std::string_view::npos) {
        if (completion.find(open) != std::string_view::npos) {
            // Truncated inside the reasoning block: no usable summary.
            return {trim(completion.substr(completion.find(open) + open.size())), std::string{}};
        }
        return {std::nullopt, std::string(completion)};
    }
    auto open_at = completion.rfind(open, close_at);
    std::size_t start = open_at == std::string_view::npos ? 0 : open_at + open.size();
    return {trim(completion.substr(start, close_at - start)), trim(completion.substr(close_at + close.size()))};
}

PromptKind classify_prompt(std::string_view prompt) {
    if (prompt.rfind(kJudgePreamble, 0) == 0) return PromptKind::Judge;
    if (prompt.rfind(kMergePreamble, 0) == 0) return PromptKind::Merge;
    if (prompt.rfind(kGenerationPreamble, 0) == 0) {
        return prompt.find(std::string("\n\n") + std::string(kTargetHeader) + "\n") != std::string_view::npos
                   ? PromptKind::TargetedGeneration
                   : PromptKind::Generation;
    }
    return PromptKind::Unknown;
}

std::optional<GenerationSections> parse_generation_prompt(std::string_view prompt) {
    auto kind = classify_prompt(prompt);
    if (kind != PromptKind::Generation && kind != PromptKind::TargetedGeneration) return std::nullopt;
    const std::string past_open = std::string(kPastSummaryHeader) + "\n";
    const std::string history_open = "\n\n" + std::string(kHistoryHeader) + "\n";
    const std::string target_open = "\n\n" + std::string(kTargetHeader) + "\n";
    const std::string end_open = "\n\n" + std::string(kEndHeader) + "\n\n";

    GenerationSections out;
    auto p = prompt.find(past_open);
    auto h = prompt.find(history_open, p);
    auto e = prompt.rfind(end_open);
    if (p == std::string_view::npos || h == std::string_view::npos || e == std::string_view::npos || e < h) {
        return std::nullopt;
    }
    out.past_summary = std::string(prompt.substr(p + past_open.size(), h - p - past_open.size()));
    auto history_start = h + history_open.size();
    auto history_end = e;
    if (kind == PromptKind::TargetedGeneration) {
        auto t = prompt.rfind(target_open, e);
        if (t == std::string_view::npos || t < history_start) return std::nullopt;
        history_end = t;
        out.target = std::string(prompt.substr(t + target_open.size(), e - t - target_open.size()));
    }
    out.history = std::string(prompt.substr(history_start, history_end - history_start));
    return out;
}

std::optional<JudgeSections> parse_judge_prompt(std::string_view prompt) {
    if (classify_prompt(prompt) != PromptKind::Judge) return std::nullopt;
    JudgeSections s;
    s.context = std::string(between(prompt, "\n\n<Prompt>\n", "\n</Prompt>\n"));
    s.persona = std::string(between(prompt, "\n\n<Preference>\n", "\n</Preference>\n"));
    s.item_a = std::string(between(prompt, "\n\n<Item A>\n", "\n</Item A>\n"));
    s.item_b = std::string(between(prompt, "\n\n<Item B>\n", "\n</Item B>\n"));
    return s;
}

std::vector<MergeCandidate> parse_merge_prompt(std::string_view prompt) {
    std::vector<MergeCandidate> out;
    if (classify_prompt(prompt) != PromptKind::Merge) return out;
    const std::string prefix = "\n\n" + std::string(kMergeCandidatePrefix);
    std::size_t at = prompt.find(prefix);
    while (at != std::string_view::npos) {
        auto next = prompt.find(prefix, at + prefix.size());
        auto block_end = next == std::string_view::npos ? prompt.rfind("\n\n" + std::string(kEndHeader)) : next;
        auto block = prompt.substr(at, block_end - at);
        auto r = block.find("=====\nReasoning:\n");
        auto s = block.rfind("\nSummary:\n");
        if (r != std::string_view::npos && s != std::string_view::npos && s > r) {
            r += std::string_view("=====\nReasoning:\n").size();
            out.push_back({std::string(block.substr(r, s - r)),
                           std::string(block.substr(s + std::string_view("\nSummary:\n").size()))});
        }
        at = next;
    }
    return out;
}

} // namespace prefstream
