#pragma once

#include "prefstream/backend.hpp"
#include "prefstream/core.hpp"
#include "prefstream/telemetry.hpp"
#include "prefstream/tokens.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace prefstream {

enum class Role { Generator, Judge, Merger, Embedder, Policy };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

inline constexpr unsigned kMaxRetryLimit = 10;
inline constexpr std::ptrdiff_t kMaxInFlight = 1024;

/// Where and how to reach one model.
struct ModelEndpoint {
    std::string base_url;  // http(s)://host[:port][/prefix] or mock:<kind>
    std::string model_id;
    Role role = Role::Generator;
    std::size_t max_prompt_tokens = 8192;
    std::size_t max_response_tokens = 4096;
    unsigned retry_limit = 3;
    std::string api_key_env_var;

    double temperature = 1.0;
    std::size_t max_in_flight = 8;
    std::chrono::milliseconds backoff{200};
    int top_logprobs = 5;
    int judge_samples = 8;  // k for the sampling fallback
    bool debias = true;
    bool strict_selection = true;
    std::optional<bool> enable_thinking;
    std::string think_open = "<think>";
    std::string think_close = "</think>";
    std::string empty_marker = "None";

    Json options;  // backend-specific settings (mock knobs, timeouts)
    std::filesystem::path config_dir;  // resolves relative paths inside options

    void check() const;
};

struct GenerationResult {
    std::optional<std::string> reasoning;
    std::string summary;
    std::optional<std::vector<double>> token_logprobs;  // one per generated token
    std::string completion;                              // raw text, reasoning included
    std::string prompt;                                  // prompt as sent, after truncation
};

struct LabelLogprobs {
    double first = 0.0;
    double second = 0.0;
};

struct JudgeVerdict {
    double prob_first = 0.5;
    std::vector<LabelLogprobs> raw_logprobs;  // one entry per issued order
    bool order_debiased = false;
    bool sampled = false;
};

/// Normalized share of the first label: e^a / (e^a + e^b).
double label_share(double logprob_first, double logprob_second);

struct GenerateOptions {
    std::uint64_t seed = 0;
    bool logprobs = false;
};

/// Client over one endpoint: bounded retries with exponential backoff, an
/// in-flight limiter, left truncation of prompts, and reasoning parsing.
/// Safe for concurrent use.
class ModelClient {
public:
    ModelClient(ModelEndpoint endpoint, std::shared_ptr<Backend> backend,
                std::shared_ptr<Telemetry> telemetry = std::make_shared<Telemetry>(),
                std::shared_ptr<const TokenCounter> counter = default_token_counter());

    ModelClient(const ModelClient&) = delete;
    ModelClient& operator=(const ModelClient&) = delete;

    /// Renders the preference-generation template and samples one completion.
    GenerationResult generate_summary(const std::optional<PreferenceSummary>& prior, std::string_view segment_text,
                                      GenerateOptions opts = {});

    /// Samples a completion for an already rendered prompt.
    GenerationResult generate(std::string prompt, GenerateOptions opts = {});

    /// Raw completion text for a prompt (no reasoning parsing).
    std::string complete(std::string prompt, std::uint64_t seed = 0);

    JudgeVerdict judge_pair(std::string_view summary, const std::optional<std::string>& context,
                            std::string_view item_a, std::string_view item_b, bool debias);
    JudgeVerdict judge_pair(std::string_view summary, const std::optional<std::string>& context,
                            std::string_view item_a, std::string_view item_b) {
        return judge_pair(summary, context, item_a, item_b, endpoint_.debias);
    }

    std::vector<double> policy_logprobs(std::string_view prompt, std::string_view response);

    std::vector<double> embed(std::string_view text);

    const ModelEndpoint& endpoint() const { return endpoint_; }
    Telemetry& telemetry() { return *telemetry_; }
    std::shared_ptr<Telemetry> telemetry_ptr() const { return telemetry_; }
    const TokenCounter& token_counter() const { return *counter_; }
    Backend& backend() { return *backend_; }

    /// Left-truncates to max_prompt_tokens, logging when it cuts.
    std::string fit_prompt(std::string prompt);

private:
    template <typename F>
    auto with_retries(const char* op, F&& fn) -> decltype(fn());

    double single_order_probability(std::string_view summary, const std::optional<std::string>& context,
                                    std::string_view first, std::string_view second, JudgeVerdict& verdict);

    ModelEndpoint endpoint_;
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<Telemetry> telemetry_;
    std::shared_ptr<const TokenCounter> counter_;
    std::unique_ptr<std::counting_semaphore<kMaxInFlight>> in_flight_;
};

/// Locates the selection label in a judge completion and returns the label
/// log-probabilities at that position.
std::optional<LabelLogprobs> decision_logprobs(const std::vector<TokenLogprob>& tokens);

// Endpoint configuration files (YAML or JSON). Backends are created from the
// URL scheme: http(s) for chat-completion servers, mock:scripted and mock:simlab
// for the deterministic in-process backends.
ModelEndpoint load_endpoint(const std::filesystem::path& path);
ModelEndpoint endpoint_from_yaml(std::string_view yaml_text, const std::filesystem::path& config_dir = {});
std::shared_ptr<Backend> make_backend(const ModelEndpoint& endpoint);
std::unique_ptr<ModelClient> make_client(const ModelEndpoint& endpoint,
                                         std::shared_ptr<Telemetry> telemetry = std::make_shared<Telemetry>());

} // namespace prefstream
