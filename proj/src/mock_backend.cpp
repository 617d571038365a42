#include "prefstream/mock_backend.hpp"

#include "prefstream/error.hpp"
#include "prefstream/hashing.hpp"
#include "prefstream/prompts.hpp"
#include "prefstream/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace prefstream {

double unit_interval(std::uint64_t key) {
    return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

std::vector<double> scripted_token_logprobs(std::uint64_t seed, std::string_view prompt, std::string_view response,
                                            std::optional<double> constant) {
    const auto tokens = default_token_counter()->split(response);
    std::vector<double> out;
    out.reserve(tokens.size());
    const std::uint64_t base = derive_seed(seed, fnv1a64(prompt));
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (constant) {
            out.push_back(*constant);
            continue;
        }
        const double u = unit_interval(derive_seed(base, fnv1a64(tokens[t], t + 1)));
        out.push_back(-(0.01 + 2.99 * u));
    }
    return out;
}

ChatCompletion scripted_completion(std::uint64_t seed, std::string_view prompt, std::string text,
                                   std::optional<double> constant) {
    ChatCompletion c;
    const auto lps = scripted_token_logprobs(seed, prompt, text, constant);
    const auto tokens = default_token_counter()->split(text);
    std::vector<TokenLogprob> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({std::string(tokens[i]), lps[i], {}});
    c.text = std::move(text);
    c.tokens = std::move(out);
    return c;
}

double log_sigmoid(double x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

ChatCompletion judge_completion(double prob_first) {
    prob_first = std::clamp(prob_first, 0.0, 1.0);
    const double lp_a = std::log(prob_first);
    const double lp_b = std::log1p(-prob_first);
    const bool first = prob_first >= 0.5;
    const std::string label = first ? " A" : " B";
    ChatCompletion c;
    c.text = selection_reply(first ? Selection::A : Selection::B);
    c.tokens = std::vector<TokenLogprob>{
        {"{\"selection\": \"Item", 0.0, {}},
        {label, first ? lp_a : lp_b, {{" A", lp_a}, {" B", lp_b}}},
        {"\"}", 0.0, {}},
    };
    return c;
}

std::vector<double> hashed_embedding(std::string_view text, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    for (auto tok : default_token_counter()->split(text)) {
        std::string lower(tok);
        for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        const auto h = fnv1a64(lower);
        v[h % dim] += (h >> 63) ? 1.0 : -1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[0] = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

ScriptedMockOptions ScriptedMockOptions::from_json(const Json& j) {
    ScriptedMockOptions o;
    if (j.is_null()) return o;
    o.seed = j.value("seed", o.seed);
    if (j.contains("const_logprob")) o.const_logprob = j["const_logprob"].get<double>();
    o.reasoning = j.value("reasoning", o.reasoning);
    o.logprobs = j.value("logprobs", o.logprobs);
    o.scoring = j.value("scoring", o.scoring);
    o.merge_mode = j.value("merge_mode", o.merge_mode);
    if (j.contains("position_bias")) o.position_bias = j["position_bias"].get<double>();
    if (j.contains("label_logprobs")) {
        const auto& l = j["label_logprobs"];
        o.label_logprobs = std::make_pair(l.at(0).get<double>(), l.at(1).get<double>());
    }
    o.embed_dim = j.value("embed_dim", o.embed_dim);
    o.fail_first = j.value("fail_first", o.fail_first);
    o.error_if_contains = j.value("error_if_contains", o.error_if_contains);
    o.empty_if_contains = j.value("empty_if_contains", o.empty_if_contains);
    if (j.contains("replies")) o.replies = j["replies"].get<std::map<std::string, std::string>>();
    if (o.merge_mode != "concat" && o.merge_mode != "echo") throw ConfigError("merge_mode must be concat or echo");
    if (o.embed_dim == 0) throw ConfigError("embed_dim must be positive");
    return o;
}

ScriptedMock::ScriptedMock(ScriptedMockOptions options)
    : options_(std::move(options)), failures_left_(options_.fail_first) {}

double ScriptedMock::judge_probability(std::string_view prompt) const {
    if (options_.position_bias) return *options_.position_bias;
    if (options_.label_logprobs) {
        auto [a, b] = *options_.label_logprobs;
        return 1.0 / (1.0 + std::exp(b - a));
    }
    // Depends on which item is listed first.
    return 0.05 + 0.9 * unit_interval(derive_seed(options_.seed, fnv1a64(prompt)));
}

ChatCompletion ScriptedMock::chat(const ChatRequest& request) {
    calls_.fetch_add(1);
    if (failures_left_.load() > 0 && failures_left_.fetch_sub(1) > 0) {
        throw TransportError("scripted transport failure");
    }
    const std::string_view prompt = request.prompt;
    if (!options_.error_if_contains.empty() && prompt.find(options_.error_if_contains) != std::string_view::npos) {
        throw BackendError("scripted backend error");
    }
    const std::string key = hex64(fnv1a64(prompt));

    std::string text;
    if (!options_.empty_if_contains.empty() && prompt.find(options_.empty_if_contains) != std::string_view::npos) {
        text.clear();
    } else if (auto it = options_.replies.find(key); it != options_.replies.end()) {
        text = it->second;
    } else {
        switch (classify_prompt(prompt)) {
        case PromptKind::Judge: {
            const double p = judge_probability(prompt);
            if (!options_.logprobs) {
                const double u = unit_interval(derive_seed(derive_seed(options_.seed, fnv1a64(prompt)), request.seed));
                return {selection_reply(u < p ? Selection::A : Selection::B), std::nullopt};
            }
            return judge_completion(p);
        }
        case PromptKind::Merge: {
            const auto candidates = parse_merge_prompt(prompt);
            std::string merged;
            if (options_.merge_mode == "echo" && !candidates.empty()) {
                merged = candidates.front().summary;
            } else {
                for (std::size_t i = 0; i < candidates.size(); ++i) {
                    if (i) merged += '\n';
                    merged += candidates[i].summary;
                }
            }
            text = options_.reasoning ? std::string(kThinkOpen) + "Merging " + std::to_string(candidates.size()) +
                                            " candidates." + std::string(kThinkClose) + "\n" + merged
                                      : merged;
            break;
        }
        default: {
            const std::string tag = hex64(derive_seed(derive_seed(options_.seed, fnv1a64(prompt)), request.seed));
            const std::string summary = "Preference summary " + tag + ".";
            text = options_.reasoning
                       ? std::string(kThinkOpen) + "Reasoning trace " + tag + "." + std::string(kThinkClose) + "\n" + summary
                       : summary;
        }
        }
    }
    if (!options_.logprobs) return {std::move(text), std::nullopt};
    return scripted_completion(options_.seed, prompt, std::move(text), options_.const_logprob);
}

std::vector<double> ScriptedMock::score(std::string_view prompt, std::string_view response) {
    if (!options_.scoring) throw CapabilityError("mock:scripted configured without scoring");
    return scripted_token_logprobs(options_.seed, prompt, response, options_.const_logprob);
}

std::vector<double> ScriptedMock::embed(std::string_view text) {
    return hashed_embedding(text, options_.embed_dim);
}

} // namespace prefstream
