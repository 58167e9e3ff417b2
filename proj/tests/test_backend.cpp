#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dialoggen/backend.hpp"
#include "test_support.hpp"

using namespace dialoggen;
using namespace test_support;

namespace {

ChatRequest simple_request(const std::string& tag, const std::string& instance = "inst-a") {
    ChatRequest request;
    request.messages = {{"user", "prompt body"}};
    request.tag = tag;
    request.instance_id = instance;
    return request;
}

}  // namespace

TEST_CASE("scripted mock returns responses in order, then exhausts") {
    MockScript script;
    script.by_tag["task_init"] = {"<Task_Start>Book a flight<Task_End>", "second"};
    MockBackend backend(script);

    CHECK(backend.complete(simple_request("task_init")).text ==
          "<Task_Start>Book a flight<Task_End>");
    CHECK(backend.complete(simple_request("task_init")).text == "second");
    CHECK_THROWS_AS(backend.complete(simple_request("task_init")), ScriptExhausted);
}

TEST_CASE("mock bucket precedence: instance, then tag, then default") {
    MockScript script;
    script.by_instance["inst-b"]["judge"] = {"from-instance"};
    script.by_tag["judge"] = {"from-tag"};
    script.default_responses = {"from-default"};
    MockBackend backend(script);

    CHECK(backend.complete(simple_request("judge", "inst-b")).text == "from-instance");
    CHECK(backend.complete(simple_request("judge", "inst-b")).text == "from-tag");
    CHECK(backend.complete(simple_request("judge", "inst-b")).text == "from-default");
    CHECK_THROWS_AS(backend.complete(simple_request("judge", "inst-b")), ScriptExhausted);
}

TEST_CASE("complete_with_retry: two bad replies then a good one, limit 3") {
    MockScript script;
    script.by_tag["task_init"] = {"garbage", "still garbage",
                                  "<Task_Start>done<Task_End>"};
    MockBackend backend(script);

    const auto validate = [](const std::string& reply) {
        if (reply.find("<Task_Start>") == std::string::npos) {
            throw ValidationError("no markers");
        }
        return reply;
    };
    const std::string result = complete_with_retry<std::string>(
        backend, simple_request("task_init"), validate, 3);
    CHECK(result == "<Task_Start>done<Task_End>");
    CHECK(backend.ledger().per_tag().at("task_init").attempted == 3);
}

TEST_CASE("complete_with_retry: limit 1 with a bad reply exhausts") {
    MockScript script;
    script.by_tag["task_init"] = {"garbage"};
    MockBackend backend(script);

    const auto validate = [](const std::string&) -> int { throw ValidationError("nope"); };
    CHECK_THROWS_AS(complete_with_retry<int>(backend, simple_request("task_init"), validate, 1),
                    ValidationExhausted);
}

TEST_CASE("complete_with_retry: valid first response costs one attempt") {
    MockScript script;
    script.by_tag["t"] = {"ok", "never used"};
    MockBackend backend(script);
    const auto validate = [](const std::string& reply) { return reply; };
    CHECK(complete_with_retry<std::string>(backend, simple_request("t"), validate, 3) == "ok");
    CHECK(backend.ledger().per_tag().at("t").attempted == 1);
}

TEST_CASE("retries never mutate the request payload") {
    MockScript script;
    script.by_tag["t"] = {"a", "b", "c"};
    RecordingMock backend(script);
    const ChatRequest request = simple_request("t");
    const auto validate = [](const std::string& reply) {
        if (reply != "c") {
            throw ValidationError("keep going");
        }
        return reply;
    };
    complete_with_retry<std::string>(backend, request, validate, 3);
    REQUIRE(backend.requests.size() == 3);
    for (const auto& seen : backend.requests) {
        CHECK(seen.messages.size() == request.messages.size());
        CHECK(seen.messages[0].content == request.messages[0].content);
        CHECK(seen.tag == request.tag);
        CHECK(seen.temperature == request.temperature);
    }
}

TEST_CASE("per-instance call cap raises BudgetExceeded") {
    auto backend = MockBackend::synthetic(1);
    backend->set_instance_call_cap(2);
    backend->complete(simple_request("judge", "capped"));
    backend->complete(simple_request("judge", "capped"));
    try {
        backend->complete(simple_request("judge", "capped"));
        FAIL("expected BudgetExceeded");
    } catch (const BudgetExceeded& err) {
        CHECK(err.scope == BudgetExceeded::Scope::Instance);
        CHECK(err.cap == 2);
    }
    // other instances unaffected
    CHECK_NOTHROW(backend->complete(simple_request("judge", "other")));
}

TEST_CASE("run-level call cap raises BudgetExceeded") {
    auto backend = MockBackend::synthetic(1);
    backend->set_run_call_cap(3);
    backend->complete(simple_request("judge", "i1"));
    backend->complete(simple_request("judge", "i2"));
    backend->complete(simple_request("judge", "i3"));
    try {
        backend->complete(simple_request("judge", "i4"));
        FAIL("expected BudgetExceeded");
    } catch (const BudgetExceeded& err) {
        CHECK(err.scope == BudgetExceeded::Scope::Run);
    }
}

TEST_CASE("ledger conservation across tags and instances") {
    auto backend = MockBackend::synthetic(3);
    const char* tags[] = {"judge", "panel_coherence", "panel_hallucination"};
    const char* instances[] = {"a", "b"};
    for (int i = 0; i < 12; ++i) {
        backend->complete(simple_request(tags[i % 3], instances[i % 2]));
    }
    const auto& ledger = backend->ledger();
    CHECK(ledger.total_attempted() == 12);
    std::uint64_t tag_sum = 0;
    for (const auto& [tag, counter] : ledger.per_tag()) {
        tag_sum += counter.attempted;
        CHECK(counter.successful <= counter.attempted);
    }
    std::uint64_t instance_sum = 0;
    for (const auto& [instance, counter] : ledger.per_instance()) {
        instance_sum += counter.attempted;
    }
    CHECK(tag_sum == 12);
    CHECK(instance_sum == 12);
    CHECK(ledger.total_successful() == 12);
}

TEST_CASE("synthesis is a pure function of request and seed") {
    ChatRequest request;
    request.messages = {{"user", "### Available Tool Candidates\n"
                                 "{\"name\":\"get_weather\",\"description\":\"w\",\"parameters\":"
                                 "[{\"name\":\"city\",\"type\":\"string\",\"required\":true,"
                                 "\"description\":\"c\"}]}\n"
                                 "\n### Target Step Number\n2\n\n## Output Format"}};
    request.tag = "task_init";
    const std::string first = synthesize_response(request, 7);
    const std::string second = synthesize_response(request, 7);
    CHECK(first == second);
    CHECK(first.find("<Task_Start>") != std::string::npos);
    CHECK(first.find("<Task_End>") != std::string::npos);
    // different seed, different surface text
    CHECK(synthesize_response(request, 8) != first);
}

TEST_CASE("mock script file round trip") {
    const std::string path = tmp_path("dialoggen_script.json");
    {
        std::ofstream out(path);
        out << R"({"auto": true, "default": ["d1"], "by_tag": {"judge": ["j1"]},
                   "by_instance": {"x": {"judge": ["i1"]}}})";
    }
    const MockScript script = MockScript::from_file(path);
    CHECK(script.synthesize_unscripted);
    CHECK(script.default_responses == std::vector<std::string>{"d1"});
    CHECK(script.by_tag.at("judge") == std::vector<std::string>{"j1"});
    CHECK(script.by_instance.at("x").at("judge") == std::vector<std::string>{"i1"});
}

TEST_CASE("chat request must carry at least one message") {
    auto backend = MockBackend::synthetic(1);
    ChatRequest empty;
    empty.tag = "judge";
    CHECK_THROWS_AS(backend->complete(empty), std::invalid_argument);
}

TEST_CASE("http backend: transport errors, provider errors, success") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        if (body["model"] == "boom") {
            res.status = 500;
            res.set_content(R"({"error": {"message": "upstream exploded"}})", "application/json");
            return;
        }
        nlohmann::json reply;
        reply["choices"] = {{{"message", {{"role", "assistant"}, {"content", "echo:" + body["messages"][0]["content"].get<std::string>()}}}}};
        reply["usage"] = {{"prompt_tokens", 5}, {"completion_tokens", 2}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1";

    SUBCASE("success path returns the first choice and usage") {
        HttpBackend backend(endpoint, "test-model", "DIALOGGEN_UNSET_KEY");
        const BackendResponse response = backend.complete(simple_request("task_init"));
        CHECK(response.text == "echo:prompt body");
        REQUIRE(response.usage.has_value());
        CHECK(response.usage->prompt_tokens == 5);
    }

    SUBCASE("non-200 statuses surface as ProviderError") {
        HttpBackend backend(endpoint, "boom", "DIALOGGEN_UNSET_KEY");
        try {
            backend.complete(simple_request("task_init"));
            FAIL("expected ProviderError");
        } catch (const ProviderError& err) {
            CHECK(err.status == 500);
            CHECK(err.retryable());
            CHECK(err.body.find("upstream exploded") != std::string::npos);
        }
    }

    server.stop();
    server_thread.join();

    SUBCASE("unreachable endpoints surface as TransportError") {
        HttpBackend backend("http://127.0.0.1:1/v1", "m", "DIALOGGEN_UNSET_KEY");
        CHECK_THROWS_AS(backend.complete(simple_request("task_init")), TransportError);
    }
}
