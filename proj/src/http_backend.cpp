#include "prefstream/http_backend.hpp"

#include "prefstream/error.hpp"

#include "httplib.h"

namespace prefstream {

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    const auto& url = options_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported scheme '" + scheme + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    host_ = url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? std::string{} : url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string HttpBackend::describe() const { return options_.base_url + " (" + options_.model_id + ")"; }

Json HttpBackend::post(const std::string& path, const Json& body, Unsupported on_unsupported) {
    httplib::Client client(host_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    auto res = client.Post(prefix_ + path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("POST " + path + ": " + httplib::to_string(res.error()));
    const int status = res->status;
    if (status == 429 || status >= 500) {
        if (status == 501 && on_unsupported == Unsupported::Capability) {
            throw CapabilityError("POST " + path + " not implemented by " + describe());
        }
        throw TransportError("POST " + path + " returned HTTP " + std::to_string(status));
    }
    if (status >= 400) {
        if (on_unsupported == Unsupported::Capability && (status == 400 || status == 404 || status == 405)) {
            throw CapabilityError("POST " + path + " unsupported by " + describe() + " (HTTP " +
                                  std::to_string(status) + ")");
        }
        throw BackendError("POST " + path + " returned HTTP " + std::to_string(status) + ": " + res->body);
    }
    try {
        return Json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw BackendError("POST " + path + ": unparsable response body: " + e.what());
    }
}

ChatCompletion HttpBackend::parse_chat_response(const Json& body, std::string_view think_open,
                                                std::string_view think_close) {
    try {
        const auto& choice = body.at("choices").at(0);
        const auto& message = choice.at("message");
        ChatCompletion out;
        if (message.contains("content") && message["content"].is_string()) out.text = message["content"];
        // Servers that split reasoning out of the content get it folded back in with the delimiters.
        for (const char* key : {"reasoning_content", "reasoning"}) {
            if (message.contains(key) && message[key].is_string() && !message[key].get_ref<const std::string&>().empty()) {
                out.text = std::string(think_open) + message[key].get<std::string>() + std::string(think_close) + "\n" +
                           out.text;
                break;
            }
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
            choice["logprobs"]["content"].is_array()) {
            std::vector<TokenLogprob> tokens;
            for (const auto& t : choice["logprobs"]["content"]) {
                TokenLogprob tl;
                tl.token = t.at("token").get<std::string>();
                tl.logprob = t.at("logprob").get<double>();
                if (t.contains("top_logprobs") && t["top_logprobs"].is_array()) {
                    for (const auto& alt : t["top_logprobs"]) {
                        tl.top.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
                    }
                }
                tokens.push_back(std::move(tl));
            }
            out.tokens = std::move(tokens);
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed chat completion: ") + e.what());
    }
}

ChatCompletion HttpBackend::chat(const ChatRequest& request) {
    Json body{
        {"model", options_.model_id},
        {"messages", Json::array({Json{{"role", "user"}, {"content", request.prompt}}})},
        {"max_tokens", request.max_tokens},
        {"temperature", request.temperature},
        {"seed", request.seed},
    };
    if (request.logprobs) {
        body["logprobs"] = true;
        if (request.top_logprobs > 0) body["top_logprobs"] = request.top_logprobs;
    }
    if (request.enable_thinking) body["chat_template_kwargs"] = Json{{"enable_thinking", *request.enable_thinking}};
    return parse_chat_response(post("/chat/completions", body, Unsupported::Fail), options_.think_open,
                               options_.think_close);
}

std::vector<double> HttpBackend::score(std::string_view prompt, std::string_view response) {
    Json body{
        {"model", options_.model_id},
        {"prompt", std::string(prompt) + std::string(response)},
        {"max_tokens", 1},
        {"temperature", 0.0},
        {"echo", true},
        {"logprobs", 0},
    };
    const auto reply = post("/completions", body, Unsupported::Capability);
    try {
        const auto& lp = reply.at("choices").at(0).at("logprobs");
        const auto& offsets = lp.at("text_offset");
        const auto& values = lp.at("token_logprobs");
        const std::size_t begin = prompt.size();
        const std::size_t end = prompt.size() + response.size();
        std::vector<double> out;
        for (std::size_t i = 0; i < offsets.size() && i < values.size(); ++i) {
            const auto off = offsets[i].get<std::size_t>();
            if (off < begin || off >= end) continue;
            if (values[i].is_null()) throw BackendError("missing logprob for a response token");
            out.push_back(values[i].get<double>());
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw CapabilityError(std::string("backend returned no echo logprobs: ") + e.what());
    }
}

std::vector<double> HttpBackend::embed(std::string_view text) {
    Json body{{"model", options_.model_id}, {"input", std::string(text)}};
    const auto reply = post("/embeddings", body, Unsupported::Capability);
    try {
        return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed embedding response: ") + e.what());
    }
}

} // namespace prefstream
