#include "prefstream/model_client.hpp"

#include "prefstream/error.hpp"
#include "prefstream/prompts.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <thread>

namespace prefstream {

std::string_view to_string(Role r) {
    switch (r) {
    case Role::Generator: return "generator";
    case Role::Judge: return "judge";
    case Role::Merger: return "merger";
    case Role::Embedder: return "embedder";
    case Role::Policy: return "policy";
    }
    return "generator";
}

Role role_from_string(std::string_view s) {
    if (s == "generator") return Role::Generator;
    if (s == "judge") return Role::Judge;
    if (s == "merger") return Role::Merger;
    if (s == "embedder") return Role::Embedder;
    if (s == "policy") return Role::Policy;
    throw ConfigError("unknown endpoint role '" + std::string(s) + "'");
}

void ModelEndpoint::check() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    if (max_prompt_tokens == 0 || max_response_tokens == 0) throw ConfigError("token limits must be positive");
    if (retry_limit > kMaxRetryLimit) {
        throw ConfigError("retry_limit " + std::to_string(retry_limit) + " exceeds " + std::to_string(kMaxRetryLimit));
    }
    if (max_in_flight == 0 || max_in_flight > static_cast<std::size_t>(kMaxInFlight)) {
        throw ConfigError("max_in_flight out of range");
    }
    if (judge_samples <= 0) throw ConfigError("judge_samples must be positive");
    if (think_open.empty() || think_close.empty()) throw ConfigError("reasoning delimiters must be non-empty");
}

double label_share(double logprob_first, double logprob_second) {
    return 1.0 / (1.0 + std::exp(logprob_second - logprob_first));
}

namespace {

double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

} // namespace

std::optional<LabelLogprobs> decision_logprobs(const std::vector<TokenLogprob>& tokens) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    std::string prefix;
    for (const auto& tok : tokens) {
        const std::string label = trim(tok.token);
        const std::string before = trim(prefix);
        prefix += tok.token;
        if ((label != "A" && label != "B") || before.size() < 4 || before.compare(before.size() - 4, 4, "Item") != 0) {
            continue;
        }
        double lp_a = kNegInf;
        double lp_b = kNegInf;
        double floor = tok.logprob;
        bool sampled_listed = false;
        for (const auto& alt : tok.top) {
            const std::string t = trim(alt.token);
            if (t == "A") lp_a = log_add(lp_a, alt.logprob);
            if (t == "B") lp_b = log_add(lp_b, alt.logprob);
            floor = std::min(floor, alt.logprob);
            if (alt.token == tok.token) sampled_listed = true;
        }
        if (!sampled_listed) {
            (label == "A" ? lp_a : lp_b) = log_add(label == "A" ? lp_a : lp_b, tok.logprob);
        }
        // A label missing from the top list gets the smallest listed log-probability as an upper bound.
        if (lp_a == kNegInf) lp_a = floor;
        if (lp_b == kNegInf) lp_b = floor;
        return LabelLogprobs{lp_a, lp_b};
    }
    return std::nullopt;
}

ModelClient::ModelClient(ModelEndpoint endpoint, std::shared_ptr<Backend> backend,
                         std::shared_ptr<Telemetry> telemetry, std::shared_ptr<const TokenCounter> counter)
    : endpoint_(std::move(endpoint)),
      backend_(std::move(backend)),
      telemetry_(std::move(telemetry)),
      counter_(std::move(counter)) {
    endpoint_.check();
    if (!backend_) throw ConfigError("model client needs a backend");
    in_flight_ = std::make_unique<std::counting_semaphore<kMaxInFlight>>(
        static_cast<std::ptrdiff_t>(endpoint_.max_in_flight));
}

template <typename F>
auto ModelClient::with_retries(const char* op, F&& fn) -> decltype(fn()) {
    telemetry_->count("requests");
    for (unsigned attempt = 0;; ++attempt) {
        telemetry_->count("attempts");
        try {
            in_flight_->acquire();
            struct Release {
                std::counting_semaphore<kMaxInFlight>& s;
                ~Release() { s.release(); }
            } release{*in_flight_};
            return fn();
        } catch (const CapabilityError&) {
            throw;
        } catch (const TransportError& e) {
            if (attempt >= endpoint_.retry_limit) {
                telemetry_->count("failures");
                throw BackendError(std::string(op) + " failed after " + std::to_string(attempt + 1) +
                                   " attempts: " + e.what());
            }
            telemetry_->count("retries");
            const auto delay = endpoint_.backoff * (1LL << attempt);
            spdlog::warn("{} on {} failed ({}), retrying in {} ms", op, endpoint_.model_id, e.what(), delay.count());
            std::this_thread::sleep_for(delay);
        }
    }
}

std::string ModelClient::fit_prompt(std::string prompt) {
    const std::size_t n = counter_->count(prompt);
    if (n <= endpoint_.max_prompt_tokens) return prompt;
    telemetry_->count("truncations");
    telemetry_->note("left-truncated prompt from " + std::to_string(n) + " to " +
                     std::to_string(endpoint_.max_prompt_tokens) + " tokens");
    spdlog::info("left-truncating prompt for {} ({} > {} tokens)", endpoint_.model_id, n, endpoint_.max_prompt_tokens);
    return std::string(counter_->keep_last(prompt, endpoint_.max_prompt_tokens));
}

GenerationResult ModelClient::generate_summary(const std::optional<PreferenceSummary>& prior,
                                               std::string_view segment_text, GenerateOptions opts) {
    std::optional<std::string_view> prior_text;
    if (prior) prior_text = prior->text;
    return generate(render_generation_prompt(prior_text, segment_text, endpoint_.empty_marker), opts);
}

GenerationResult ModelClient::generate(std::string prompt, GenerateOptions opts) {
    ChatRequest req;
    req.prompt = fit_prompt(std::move(prompt));
    req.max_tokens = endpoint_.max_response_tokens;
    req.temperature = endpoint_.temperature;
    req.seed = opts.seed;
    req.logprobs = opts.logprobs;
    req.enable_thinking = endpoint_.enable_thinking;
    auto completion = with_retries("generate", [&] { return backend_->chat(req); });

    GenerationResult out;
    auto parsed = split_reasoning(completion.text, endpoint_.think_open, endpoint_.think_close);
    if (trim(parsed.summary).empty()) {
        telemetry_->count("empty_completions");
        throw GenerationError("empty completion from " + endpoint_.model_id);
    }
    out.reasoning = std::move(parsed.reasoning);
    out.summary = std::move(parsed.summary);
    if (completion.tokens) {
        std::vector<double> lps;
        lps.reserve(completion.tokens->size());
        for (const auto& t : *completion.tokens) lps.push_back(t.logprob);
        out.token_logprobs = std::move(lps);
    }
    out.completion = std::move(completion.text);
    out.prompt = std::move(req.prompt);
    return out;
}

std::string ModelClient::complete(std::string prompt, std::uint64_t seed) {
    ChatRequest req;
    req.prompt = fit_prompt(std::move(prompt));
    req.max_tokens = endpoint_.max_response_tokens;
    req.temperature = endpoint_.temperature;
    req.seed = seed;
    req.enable_thinking = endpoint_.enable_thinking;
    return with_retries("complete", [&] { return backend_->chat(req); }).text;
}

double ModelClient::single_order_probability(std::string_view summary, const std::optional<std::string>& context,
                                             std::string_view first, std::string_view second, JudgeVerdict& verdict) {
    std::optional<std::string_view> ctx;
    if (context) ctx = *context;
    ChatRequest req;
    req.prompt = fit_prompt(render_judge_prompt(ctx, summary, first, second, endpoint_.empty_marker));
    req.max_tokens = std::min<std::size_t>(endpoint_.max_response_tokens, 64);
    req.temperature = 0.0;
    req.logprobs = true;
    req.top_logprobs = std::max(endpoint_.top_logprobs, 2);
    req.enable_thinking = endpoint_.enable_thinking;
    auto completion = with_retries("judge", [&] { return backend_->chat(req); });

    if (completion.tokens) {
        auto labels = decision_logprobs(*completion.tokens);
        if (!labels) throw JudgeError("no selection label in judge reply: " + completion.text);
        verdict.raw_logprobs.push_back(*labels);
        return label_share(labels->first, labels->second);
    }

    // No logprobs from this backend: estimate from k sampled selections.
    verdict.sampled = true;
    telemetry_->count("judge_sampled");
    int first_votes = 0;
    int parsed = 0;
    req.temperature = endpoint_.temperature > 0 ? endpoint_.temperature : 1.0;
    req.logprobs = false;
    req.top_logprobs = 0;
    for (int k = 0; k < endpoint_.judge_samples; ++k) {
        req.seed = static_cast<std::uint64_t>(k + 1);
        const auto reply = with_retries("judge", [&] { return backend_->chat(req); });
        if (auto sel = parse_selection(reply.text, endpoint_.strict_selection)) {
            ++parsed;
            if (*sel == Selection::A) ++first_votes;
        }
    }
    if (parsed == 0) throw JudgeError("judge produced no parsable selection in " +
                                      std::to_string(endpoint_.judge_samples) + " samples");
    return static_cast<double>(first_votes) / parsed;
}

JudgeVerdict ModelClient::judge_pair(std::string_view summary, const std::optional<std::string>& context,
                                     std::string_view item_a, std::string_view item_b, bool debias) {
    if (item_a.empty() || item_b.empty()) throw ContractError("judge items must be non-empty");
    if (item_a == item_b) throw ContractError("judge items must be distinct");
    JudgeVerdict verdict;
    const double p_forward = single_order_probability(summary, context, item_a, item_b, verdict);
    if (!debias) {
        verdict.prob_first = p_forward;
        return verdict;
    }
    const double p_swapped = single_order_probability(summary, context, item_b, item_a, verdict);
    verdict.prob_first = 0.5 * (p_forward + (1.0 - p_swapped));
    verdict.order_debiased = true;
    return verdict;
}

std::vector<double> ModelClient::policy_logprobs(std::string_view prompt, std::string_view response) {
    return with_retries("score", [&] { return backend_->score(prompt, response); });
}

std::vector<double> ModelClient::embed(std::string_view text) {
    if (text.empty()) throw ContractError("cannot embed empty text");
    auto v = with_retries("embed", [&] { return backend_->embed(text); });
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (v.empty() || norm == 0.0 || !std::isfinite(norm)) throw BackendError("degenerate embedding from " + backend_->describe());
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

} // namespace prefstream
