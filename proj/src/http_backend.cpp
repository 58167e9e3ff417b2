#include <httplib.h>

#include <nlohmann/json.hpp>

#include "dialoggen/backend.hpp"

namespace dialoggen {

namespace {

struct SplitUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

SplitUrl split_endpoint(const std::string& endpoint) {
    const std::size_t scheme = endpoint.find("://");
    const std::size_t path_start =
        endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
        return {endpoint, ""};
    }
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    return {endpoint.substr(0, path_start), prefix};
}

}  // namespace

BackendResponse perform_chat_completion(const std::string& endpoint, const std::string& model,
                                        const std::string& api_key, const ChatRequest& request) {
    using json = nlohmann::json;

    const SplitUrl url = split_endpoint(endpoint);
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);

    json body;
    body["model"] = model;
    json messages = json::array();
    for (const auto& message : request.messages) {
        messages.push_back({{"role", message.role}, {"content", message.content}});
    }
    body["messages"] = std::move(messages);
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;

    httplib::Headers headers;
    if (!api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key);
    }

    auto result = client.Post(url.path_prefix + "/chat/completions", headers, body.dump(),
                              "application/json");
    if (!result) {
        throw TransportError(httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        throw ProviderError(result->status, result->body);
    }

    json payload;
    try {
        payload = json::parse(result->body);
    } catch (const json::parse_error& err) {
        throw ProviderError(200, std::string("unparseable response body: ") + err.what());
    }
    if (!payload.contains("choices") || payload["choices"].empty()) {
        throw ProviderError(200, "response carries no choices");
    }

    BackendResponse response;
    response.text = payload["choices"][0].value("message", json::object()).value("content", "");
    if (payload.contains("usage")) {
        TokenUsage usage;
        usage.prompt_tokens = payload["usage"].value("prompt_tokens", 0);
        usage.completion_tokens = payload["usage"].value("completion_tokens", 0);
        response.usage = usage;
    }
    return response;
}

}  // namespace dialoggen
