#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dialoggen/core.hpp"

namespace dialoggen {

// ---------------------------------------------------------------------------
// Requests and responses
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role;  // "system" or "user"
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    int max_output_tokens = 8192;
    std::string tag;          // stage name, for per-stage accounting
    std::string instance_id;  // owning instance, for per-instance accounting
};

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct BackendResponse {
    std::string text;
    std::optional<TokenUsage> usage;
    std::chrono::microseconds latency{0};
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct TransportError : std::runtime_error {
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

struct ProviderError : std::runtime_error {
    ProviderError(int status_code, std::string response_body)
        : std::runtime_error("provider returned status " + std::to_string(status_code)),
          status(status_code),
          body(std::move(response_body)) {}

    int status;
    std::string body;

    bool retryable() const { return status == 429 || status >= 500; }
};

struct BudgetExceeded : std::runtime_error {
    enum class Scope { Instance, Run };

    BudgetExceeded(Scope cap_scope, std::uint64_t cap_value)
        : std::runtime_error(std::string(cap_scope == Scope::Instance ? "instance" : "run") +
                             " call cap of " + std::to_string(cap_value) + " reached"),
          scope(cap_scope),
          cap(cap_value) {}

    Scope scope;
    std::uint64_t cap;
};

struct ScriptExhausted : std::runtime_error {
    explicit ScriptExhausted(const std::string& tag)
        : std::runtime_error("mock script exhausted for tag '" + tag + "'") {}
};

/// Thrown by response validators to trigger a retry.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct ValidationExhausted : std::runtime_error {
    explicit ValidationExhausted(std::string last)
        : std::runtime_error("validation failed after retries: " + last),
          last_error(std::move(last)) {}

    std::string last_error;
};

// ---------------------------------------------------------------------------
// Call accounting
// ---------------------------------------------------------------------------

/// Thread-safe monotone counters of attempted and successful backend calls,
/// broken down by stage tag and by instance.
class CallLedger {
public:
    struct Counter {
        std::uint64_t attempted = 0;
        std::uint64_t successful = 0;
    };

    void record_attempt(const std::string& tag, const std::string& instance_id);
    void record_success(const std::string& tag, const std::string& instance_id);

    std::uint64_t total_attempted() const;
    std::uint64_t total_successful() const;
    std::uint64_t instance_attempted(const std::string& instance_id) const;
    std::map<std::string, Counter> per_tag() const;
    std::map<std::string, Counter> per_instance() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, Counter> by_tag_;
    std::map<std::string, Counter> by_instance_;
    Counter total_;
};

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

/// Uniform chat-completion interface. complete() enforces call caps, records
/// the attempt in the ledger, and optionally appends to a request transcript.
class Backend {
public:
    virtual ~Backend();

    BackendResponse complete(const ChatRequest& request);

    CallLedger& ledger() { return ledger_; }
    const CallLedger& ledger() const { return ledger_; }

    void set_instance_call_cap(std::uint64_t cap) { instance_call_cap_ = cap; }
    void set_run_call_cap(std::uint64_t cap) { run_call_cap_ = cap; }

    /// Streams {seq, instance, tag, request, response} JSONL records.
    void open_transcript(const std::string& path);

protected:
    virtual BackendResponse complete_impl(const ChatRequest& request) = 0;

private:
    void record_transcript(const ChatRequest& request, const std::string& response,
                           const std::string& error);

    CallLedger ledger_;
    std::uint64_t instance_call_cap_ = 200;
    std::uint64_t run_call_cap_ = 0;  // 0 = unlimited
    std::mutex transcript_mutex_;
    std::unique_ptr<std::ofstream> transcript_;
    std::uint64_t transcript_seq_ = 0;
};

/// Reissues the identical request until `validate` accepts the response or
/// `retry_limit` attempts are spent. Transport failures and retryable
/// provider statuses consume attempts like validation failures do.
template <typename T>
T complete_with_retry(Backend& backend, const ChatRequest& request,
                      const std::function<T(const std::string&)>& validate, int retry_limit) {
    std::string last_error = "no attempts made";
    for (int attempt = 0; attempt < retry_limit; ++attempt) {
        std::string text;
        try {
            text = backend.complete(request).text;
        } catch (const TransportError& err) {
            last_error = err.what();
            continue;
        } catch (const ProviderError& err) {
            if (!err.retryable()) {
                throw;
            }
            last_error = err.what();
            continue;
        }
        try {
            return validate(text);
        } catch (const ValidationError& err) {
            last_error = err.what();
        }
    }
    throw ValidationExhausted(last_error);
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// Scripted responses: consumed in order, most specific bucket first
/// ((instance, tag), then tag, then the shared default list). With
/// `synthesize_unscripted` set, requests that run past the script receive a
/// deterministic structurally-valid response derived from the request text,
/// which lets full pipelines run offline.
struct MockScript {
    std::vector<std::string> default_responses;
    std::map<std::string, std::vector<std::string>> by_tag;
    std::map<std::string, std::map<std::string, std::vector<std::string>>> by_instance;
    bool synthesize_unscripted = false;

    static MockScript from_file(const std::string& path);
};

class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script = {}, std::uint64_t seed = 0);

    /// Convenience: auto-only mock (no scripted entries).
    static std::unique_ptr<MockBackend> synthetic(std::uint64_t seed);

protected:
    BackendResponse complete_impl(const ChatRequest& request) override;

private:
    std::optional<std::string> next_scripted(const ChatRequest& request);

    MockScript script_;
    std::uint64_t seed_;
    std::mutex mutex_;
    std::map<std::string, std::size_t> tag_cursor_;
    std::map<std::string, std::map<std::string, std::size_t>> instance_cursor_;
    std::size_t default_cursor_ = 0;
};

/// Deterministic response synthesis used by MockBackend's auto mode.
/// Exposed for tests that want to script "almost valid" variants.
std::string synthesize_response(const ChatRequest& request, std::uint64_t seed);

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Chat-completions client: POST {endpoint}/chat/completions with a bearer
/// credential taken from the configured environment variable.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string endpoint, std::string model, std::string api_key_env);

protected:
    BackendResponse complete_impl(const ChatRequest& request) override;

private:
    std::string endpoint_;
    std::string model_;
    std::string api_key_;
};

/// Wire-level chat-completions exchange (one POST, no retries).
BackendResponse perform_chat_completion(const std::string& endpoint, const std::string& model,
                                        const std::string& api_key, const ChatRequest& request);

/// Builds the backend named by the config (mock or http), applying call caps.
std::unique_ptr<Backend> make_backend(const GenerationConfig& config);

}  // namespace dialoggen
