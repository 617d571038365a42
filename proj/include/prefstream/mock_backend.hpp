#pragma once

#include "prefstream/backend.hpp"
#include "prefstream/core.hpp"

#include <atomic>
#include <map>
#include <optional>
#include <string>

namespace prefstream {

// Building blocks shared by the scripted backends. All of them are pure
// functions of their arguments.

/// Uniform value in [0, 1) from a 64-bit key.
double unit_interval(std::uint64_t key);

/// Per-token log-probabilities for a response, derived from (seed, prompt, position, token).
std::vector<double> scripted_token_logprobs(std::uint64_t seed, std::string_view prompt, std::string_view response,
                                            std::optional<double> constant);

/// Attaches scripted token logprobs to a completion text.
ChatCompletion scripted_completion(std::uint64_t seed, std::string_view prompt, std::string text,
                                   std::optional<double> constant);

/// A selection reply whose decision token carries ln p and ln(1-p) for the two labels.
ChatCompletion judge_completion(double prob_first);

/// Hashed bag-of-words embedding, unit length.
std::vector<double> hashed_embedding(std::string_view text, std::size_t dim);

/// log(sigmoid(x)) without overflow.
double log_sigmoid(double x);

struct ScriptedMockOptions {
    std::uint64_t seed = 0;
    std::optional<double> const_logprob;
    bool reasoning = true;
    bool logprobs = true;
    bool scoring = true;
    std::string merge_mode = "concat";  // "concat" or "echo"
    std::optional<double> position_bias;  // fixed P(first item) for the judge
    std::optional<std::pair<double, double>> label_logprobs;
    std::size_t embed_dim = 64;
    int fail_first = 0;  // transport failures before the first success
    std::string error_if_contains;
    std::string empty_if_contains;
    std::map<std::string, std::string> replies;  // prompt hash (hex64) -> completion

    static ScriptedMockOptions from_json(const Json& j);
};

/// Deterministic backend keyed by prompt hash. Generation, merging, judging,
/// scoring and embedding all depend only on (seed, request content).
class ScriptedMock final : public Backend {
public:
    explicit ScriptedMock(ScriptedMockOptions options = {});

    ChatCompletion chat(const ChatRequest& request) override;
    std::vector<double> score(std::string_view prompt, std::string_view response) override;
    std::vector<double> embed(std::string_view text) override;
    std::string describe() const override { return "mock:scripted"; }

    std::size_t calls() const { return calls_.load(); }
    const ScriptedMockOptions& options() const { return options_; }

    /// P(first item preferred) used by the judge path for a given prompt.
    double judge_probability(std::string_view prompt) const;

private:
    ScriptedMockOptions options_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<int> failures_left_;
};

} // namespace prefstream
