#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefstream {

/// A single-turn chat-completion request.
struct ChatRequest {
    std::string prompt;
    std::size_t max_tokens = 4096;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    bool logprobs = false;
    int top_logprobs = 0;
    std::optional<bool> enable_thinking;
};

struct TopLogprob {
    std::string token;
    double logprob = 0.0;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    std::vector<TopLogprob> top;
};

struct ChatCompletion {
    std::string text;
    std::optional<std::vector<TokenLogprob>> tokens;  // present when the backend returned logprobs
};

/// Transport to one model. Implementations throw TransportError for retryable
/// failures and CapabilityError for unsupported operations.
class Backend {
public:
    virtual ~Backend() = default;

    virtual ChatCompletion chat(const ChatRequest& request) = 0;

    /// Log-probability of each response token given the prompt.
    virtual std::vector<double> score(std::string_view prompt, std::string_view response);

    virtual std::vector<double> embed(std::string_view text);

    virtual std::string describe() const = 0;
};

} // namespace prefstream
