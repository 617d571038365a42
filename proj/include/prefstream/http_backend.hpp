#pragma once

#include "prefstream/backend.hpp"
#include "prefstream/core.hpp"

#include <chrono>
#include <string>

namespace prefstream {

struct HttpBackendOptions {
    std::string base_url;  // scheme://host[:port][/prefix], e.g. http://localhost:8000/v1
    std::string model_id;
    std::string api_key;   // empty: no Authorization header
    std::chrono::seconds timeout{300};
    std::string think_open = "<think>";
    std::string think_close = "</think>";
};

/// Chat-completion-compatible HTTP backend.
///   chat  -> POST {prefix}/chat/completions (logprobs + top_logprobs when requested)
///   score -> POST {prefix}/completions with echo=true, reading prompt-token logprobs
///   embed -> POST {prefix}/embeddings
/// 429 and 5xx responses and connection failures raise TransportError.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options);

    ChatCompletion chat(const ChatRequest& request) override;
    std::vector<double> score(std::string_view prompt, std::string_view response) override;
    std::vector<double> embed(std::string_view text) override;
    std::string describe() const override;

    /// Parses a chat-completion response body.
    static ChatCompletion parse_chat_response(const Json& body, std::string_view think_open,
                                              std::string_view think_close);

private:
    enum class Unsupported { Fail, Capability };
    Json post(const std::string& path, const Json& body, Unsupported on_unsupported);

    HttpBackendOptions options_;
    std::string host_;    // scheme://host:port
    std::string prefix_;  // path prefix without trailing slash
};

} // namespace prefstream
