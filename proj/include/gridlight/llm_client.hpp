#pragma once

#include <gridlight/prompting.hpp>

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>

namespace gridlight {

// Optional request/response tap, e.g. the --log-llm JSONL writer.
using ChatLogger = std::function<void(const Json& request, const Json& response)>;

namespace detail {

struct SplitUrl {
    std::string host;  // scheme://host[:port]
    std::string path_prefix;
};

inline SplitUrl split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

}  // namespace detail

// POSTs an OpenAI-style chat completion and returns the first choice's
// content. Retries 5xx/429/transport failures with exponential backoff;
// authentication failures surface immediately.
inline std::string chat_complete(const EndpointConfig& ep, const PromptBundle& bundle,
                                 const ChatLogger& logger = nullptr) {
    ep.validate();
    auto url = detail::split_base_url(ep.base_url);
    httplib::Client cli(url.host);
    cli.set_connection_timeout(ep.timeout_s, 0);
    cli.set_read_timeout(ep.timeout_s, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(ep.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    Json body = {{"model", ep.model},
                 {"messages",
                  {{{"role", "system"}, {"content", bundle.system_text}},
                   {{"role", "user"}, {"content", bundle.user_text}}}},
                 {"temperature", ep.temperature},
                 {"max_tokens", ep.max_tokens}};
    const std::string payload = body.dump();
    const std::string path = url.path_prefix + "/chat/completions";

    std::string last_error;
    for (int attempt = 0; attempt <= ep.retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(ep.backoff_ms * (1 << (attempt - 1))));
        auto res = cli.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403)
            throw AuthError("chat endpoint rejected credentials (HTTP " +
                            std::to_string(res->status) + "); check $" + ep.api_key_env);
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status));
        Json reply = Json::parse(res->body, nullptr, false);
        if (reply.is_discarded())
            throw TransportError("chat endpoint returned non-JSON body");
        if (logger) logger(body, reply);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const Json::exception&) {
            throw TransportError("chat endpoint response missing choices[0].message.content");
        }
    }
    throw TransportError("chat endpoint unreachable after " + std::to_string(ep.retries + 1) +
                         " attempts: " + last_error);
}

}  // namespace gridlight
