#include "prefstream/config.hpp"
#include "prefstream/error.hpp"
#include "prefstream/http_backend.hpp"
#include "prefstream/mock_backend.hpp"
#include "prefstream/model_client.hpp"
#include "prefstream/simlab.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <limits>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace prefstream {

namespace {

Json scalar_to_json(const YAML::Node& node) {
    const std::string& s = node.Scalar();
    if (node.Tag() == "!") return s;  // quoted
    if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const char* digits = (*first == '+' ) ? first + 1 : first;
    std::int64_t i = 0;
    if (auto r = std::from_chars(digits, last, i); r.ec == std::errc{} && r.ptr == last) return i;
    double d = 0.0;
    if (auto r = std::from_chars(digits, last, d); r.ec == std::errc{} && r.ptr == last) return d;
    if (s == ".inf" || s == ".Inf" || s == "+.inf") return std::numeric_limits<double>::infinity();
    return s;
}

Json node_to_json(const YAML::Node& node) {
    switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
        Json arr = Json::array();
        for (const auto& child : node) arr.push_back(node_to_json(child));
        return arr;
    }
    case YAML::NodeType::Map: {
        Json obj = Json::object();
        for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
        return obj;
    }
    }
    return nullptr;
}

template <typename T>
void read_key(const Json& obj, const char* key, T& out) {
    if (!obj.contains(key) || obj[key].is_null()) return;
    try {
        out = obj[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("endpoint key '") + key + "' has the wrong type");
    }
}

void read_size(const Json& obj, const char* key, std::size_t& out) {
    if (!obj.contains(key) || obj[key].is_null()) return;
    if (!obj[key].is_number_integer() || obj[key].get<std::int64_t>() < 0) {
        throw ConfigError(std::string("endpoint key '") + key + "' must be a non-negative integer");
    }
    out = obj[key].get<std::size_t>();
}

} // namespace

Json yaml_to_json(std::string_view text) {
    try {
        return node_to_json(YAML::Load(std::string(text)));
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("invalid YAML: ") + e.what());
    }
}

Json load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return yaml_to_json(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::filesystem::path& p) {
    if (p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

void require_known_keys(const Json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a mapping");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + std::string(where));
        }
    }
}

ModelEndpoint endpoint_from_yaml(std::string_view yaml_text, const std::filesystem::path& config_dir) {
    const Json j = yaml_to_json(yaml_text);
    require_known_keys(j,
                       {"base_url", "model_id", "role", "api_key_env_var", "limits", "max_prompt_tokens",
                        "max_response_tokens", "retry_limit", "temperature", "max_in_flight", "backoff_ms",
                        "top_logprobs", "judge_samples", "debias", "strict_selection", "enable_thinking",
                        "think_open", "think_close", "empty_marker", "options"},
                       "endpoint config");
    ModelEndpoint e;
    e.config_dir = config_dir;
    read_key(j, "base_url", e.base_url);
    read_key(j, "model_id", e.model_id);
    if (j.contains("role")) e.role = role_from_string(j["role"].get<std::string>());
    read_key(j, "api_key_env_var", e.api_key_env_var);

    unsigned retry = e.retry_limit;
    for (const Json* src : {&j, j.contains("limits") ? &j["limits"] : nullptr}) {
        if (!src) continue;
        if (src != &j) require_known_keys(*src, {"max_prompt_tokens", "max_response_tokens", "retry_limit"}, "limits");
        read_size(*src, "max_prompt_tokens", e.max_prompt_tokens);
        read_size(*src, "max_response_tokens", e.max_response_tokens);
        std::size_t r = retry;
        read_size(*src, "retry_limit", r);
        if (r > kMaxRetryLimit) throw ConfigError("retry_limit must not exceed " + std::to_string(kMaxRetryLimit));
        retry = static_cast<unsigned>(r);
    }
    e.retry_limit = retry;

    read_key(j, "temperature", e.temperature);
    read_size(j, "max_in_flight", e.max_in_flight);
    if (j.contains("backoff_ms")) {
        std::size_t ms = 0;
        read_size(j, "backoff_ms", ms);
        e.backoff = std::chrono::milliseconds(static_cast<std::int64_t>(ms));
    }
    read_key(j, "top_logprobs", e.top_logprobs);
    read_key(j, "judge_samples", e.judge_samples);
    read_key(j, "debias", e.debias);
    read_key(j, "strict_selection", e.strict_selection);
    if (j.contains("enable_thinking") && !j["enable_thinking"].is_null()) e.enable_thinking = j["enable_thinking"].get<bool>();
    read_key(j, "think_open", e.think_open);
    read_key(j, "think_close", e.think_close);
    read_key(j, "empty_marker", e.empty_marker);
    if (j.contains("options")) e.options = j["options"];
    if (e.model_id.empty()) e.model_id = e.base_url;
    e.check();
    return e;
}

ModelEndpoint load_endpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open endpoint config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return endpoint_from_yaml(ss.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::shared_ptr<Backend> make_backend(const ModelEndpoint& endpoint) {
    const auto& url = endpoint.base_url;
    const Json opts = endpoint.options.is_object() ? endpoint.options : Json::object();
    if (url.starts_with("http://") || url.starts_with("https://")) {
        HttpBackendOptions o;
        o.base_url = url;
        o.model_id = endpoint.model_id;
        o.think_open = endpoint.think_open;
        o.think_close = endpoint.think_close;
        if (opts.contains("timeout_s")) o.timeout = std::chrono::seconds(opts["timeout_s"].get<std::int64_t>());
        if (!endpoint.api_key_env_var.empty()) {
            const char* key = std::getenv(endpoint.api_key_env_var.c_str());
            if (!key) throw ConfigError("environment variable " + endpoint.api_key_env_var + " is not set");
            o.api_key = key;
        }
        return std::make_shared<HttpBackend>(std::move(o));
    }
    if (url == "mock:scripted") return std::make_shared<ScriptedMock>(ScriptedMockOptions::from_json(opts));
    if (url == "mock:simlab") {
        if (!opts.contains("world")) throw ConfigError("mock:simlab endpoints need options.world (a simlab-gen directory)");
        const auto dir = resolve_path(endpoint.config_dir, opts["world"].get<std::string>());
        return std::make_shared<simlab::SimBackend>(simlab::SimWorld::load(dir), simlab::SimBackendOptions::from_json(opts));
    }
    throw ConfigError("unsupported endpoint base_url '" + url + "'");
}

std::unique_ptr<ModelClient> make_client(const ModelEndpoint& endpoint, std::shared_ptr<Telemetry> telemetry) {
    return std::make_unique<ModelClient>(endpoint, make_backend(endpoint), std::move(telemetry));
}

} // namespace prefstream
