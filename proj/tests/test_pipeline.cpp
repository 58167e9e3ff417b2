#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dialoggen/pipeline.hpp"
#include "test_support.hpp"

using namespace dialoggen;
using namespace test_support;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

int count_lines(const std::string& text) {
    int lines = 0;
    for (char c : text) {
        lines += c == '\n' ? 1 : 0;
    }
    return lines;
}

}  // namespace

TEST_CASE("count_assistant_turns") {
    const auto instances = load_instances(fixtures_dir() + "/sample_instances.jsonl");
    REQUIRE(instances.size() == 2);
    // hand counts: clarify + parallel lookup + booking + summary; then
    // weather + reminder + summary
    CHECK(count_assistant_turns(instances[0]) == 4);
    CHECK(count_assistant_turns(instances[1]) == 3);

    Instance empty;
    CHECK(count_assistant_turns(empty) == 0);
}

TEST_CASE("skeleton assistant-turn count is sum of steps plus one summary per subtask") {
    GenerationConfig config = base_config(7);
    config.injection_count_range = {0, 0};
    config.max_refinement_passes = 0;
    Pipeline pipeline = make_pipeline(config);
    for (std::uint64_t attempt = 0; attempt < 5; ++attempt) {
        const Instance instance = pipeline.generate_instance(attempt);
        int expected = 0;
        for (const auto& subtask : instance.task_plan.subtasks) {
            expected += subtask.step_count + 1;
        }
        CHECK(count_assistant_turns(instance) == expected);
    }
}

TEST_CASE("run accepts n clean instances with pass rate 1.0") {
    GenerationConfig config = base_config(21);
    Pipeline pipeline = make_pipeline(config);
    const std::string out = tmp_path("dialoggen_run3.jsonl");
    const RunStats stats = pipeline.run(3, out);

    CHECK(stats.requested == 3);
    CHECK(stats.attempted == 3);
    CHECK(stats.passed_verification == 3);
    CHECK(stats.pass_rate == 1.0);
    CHECK(count_lines(read_file(out)) == 3);

    int histogram_mass = 0;
    for (const auto& [turns, frequency] : stats.assistant_turn_histogram) {
        histogram_mass += frequency;
    }
    CHECK(histogram_mass == stats.passed_verification);
}

TEST_CASE("ledger identity: stats totals equal per-stage and per-instance sums") {
    GenerationConfig config = base_config(22);
    Pipeline pipeline = make_pipeline(config);
    const RunStats stats = pipeline.run(2, tmp_path("dialoggen_ledger.jsonl"));

    std::uint64_t stage_sum = 0;
    for (const auto& [tag, calls] : stats.per_stage_calls) {
        stage_sum += calls;
    }
    CHECK(stats.total_api_calls == stage_sum);

    std::uint64_t instance_sum = 0;
    for (const auto& [instance, counter] : pipeline.backend().ledger().per_instance()) {
        instance_sum += counter.attempted;
    }
    CHECK(stats.total_api_calls == instance_sum);
}

TEST_CASE("emitted instances reload and re-pass the rule checks") {
    GenerationConfig config = base_config(23);
    Pipeline pipeline = make_pipeline(config);
    const std::string out = tmp_path("dialoggen_reload.jsonl");
    pipeline.run(3, out);

    GenerationConfig rules_only = base_config(23);
    rules_only.panel_enabled = false;
    Verifier verifier(nullptr, rules_only, nullptr);
    const auto instances = load_instances(out);
    REQUIRE(instances.size() == 3);
    for (const auto& instance : instances) {
        CHECK(check_alternation(instance.trajectory).empty());
        CHECK(check_format(instance.trajectory).empty());
        CHECK(check_calls(instance.trajectory).empty());
        CHECK(verifier.verify(instance).passed);
    }
}

TEST_CASE("emit / load round trip is byte-stable over 100 instances") {
    GenerationConfig config = base_config(24);
    Pipeline pipeline = make_pipeline(config);
    std::vector<Instance> instances;
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        instances.push_back(pipeline.generate_instance(attempt));
    }
    const std::string first_path = tmp_path("dialoggen_rt1.jsonl");
    const std::string second_path = tmp_path("dialoggen_rt2.jsonl");
    emit_jsonl(instances, first_path);
    emit_jsonl(load_instances(first_path), second_path);
    CHECK(read_file(first_path) == read_file(second_path));

    emit_jsonl({}, tmp_path("dialoggen_empty.jsonl"));
    CHECK(read_file(tmp_path("dialoggen_empty.jsonl")).empty());
}

TEST_CASE("a seeded unknown-tool fault costs one extra attempt") {
    GenerationConfig config = base_config(25);
    config.subtask_range = {2, 2};
    config.steps_range = {1, 1};
    config.injection_count_range = {0, 0};  // leave the seeded fault untouched
    config.max_refinement_passes = 0;

    // Instance 2's first fragment calls a tool outside the candidate list.
    // Structure is valid, so initialization accepts it; verification drops it.
    MockScript script;
    script.synthesize_unscripted = true;
    script.by_instance["inst-000002"]["traj_init"] = {R"([
        {"role": "user", "content": "Please handle the next part; details all set."},
        {"role": "assistant", "content": "[teleport_unit(where='Porto')]"},
        {"role": "tool", "content": "[{\"status\": \"ok\"}]"},
        {"role": "assistant", "content": "That part is finished now."}
    ])"};
    auto backend = std::make_unique<MockBackend>(script, config.seed);
    Pipeline pipeline(config, std::move(backend));

    const RunStats stats = pipeline.run(3, tmp_path("dialoggen_fault.jsonl"));
    CHECK(stats.attempted == 4);
    CHECK(stats.passed_verification == 3);
    CHECK(stats.pass_rate == doctest::Approx(0.75));
}

TEST_CASE("config file loading: defaults, overrides, unknown keys") {
    const std::string path = tmp_path("dialoggen_config.json");
    {
        std::ofstream out(path);
        out << R"({
            "seed": 7,
            "subtask_range": [2, 3],
            "tool_pool_path": ")" << fixtures_dir() << R"(/tool_pool.json",
            "templates_dir": ")" << templates_dir() << R"(",
            "prompt_examples_path": ")" << fixtures_dir() << R"(/prompt_examples.json",
            "backend": {"kind": "mock"}
        })";
    }
    const GenerationConfig config = load_config(path);
    CHECK(config.seed == 7);
    CHECK(config.subtask_range.min == 2);
    CHECK(config.subtask_range.max == 3);
    CHECK(config.steps_range.max == 6);          // default
    CHECK(config.max_refinement_passes == 5);    // default
    CHECK(config.weight_decay_factor == 0.5);    // default
    CHECK(config.injection_count_range.max == 3);  // default

    CHECK_THROWS_AS(config_from_json_text(R"({"subtask_rang": [2, 3]})", ""), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"backend": {"kindd": "mock"}})", ""), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"weight_decay_factor": 1.5})", ""), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("not json", ""), ConfigError);
}

TEST_CASE("config resolves relative paths against its own directory") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "dialoggen_cfg_dir";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "cfg.json");
        out << R"({"tool_pool_path": "pool.json"})";
    }
    const GenerationConfig config = load_config((dir / "cfg.json").string());
    CHECK(config.tool_pool_path == (dir / "pool.json").string());
    fs::remove_all(dir);
}

TEST_CASE("run-level budget produces partial output and finalized stats") {
    GenerationConfig config = base_config(26);
    config.run_call_cap = 30;  // roughly one instance's worth
    Pipeline pipeline = make_pipeline(config);
    const std::string out = tmp_path("dialoggen_budget.jsonl");
    const RunStats stats = pipeline.run(5, out);
    CHECK(stats.budget_exhausted);
    CHECK(stats.passed_verification < 5);
    CHECK(count_lines(read_file(out)) == stats.passed_verification);
}

TEST_CASE("CLI: generate, verify, stats, and exit codes") {
    const std::string cli = cli_path();
    const std::string config_path = tmp_path("dialoggen_cli_cfg.json");
    {
        std::ofstream out(config_path);
        out << R"({
            "seed": 9,
            "tool_pool_path": ")" << fixtures_dir() << R"(/tool_pool.json",
            "templates_dir": ")" << templates_dir() << R"(",
            "prompt_examples_path": ")" << fixtures_dir() << R"(/prompt_examples.json",
            "backend": {"kind": "mock"}
        })";
    }
    const std::string out = tmp_path("dialoggen_cli_out.jsonl");

    CHECK(std::system((cli + " generate --config " + config_path + " --n 2 --out " + out +
                       " > /dev/null")
                          .c_str()) == 0);
    CHECK(std::system((cli + " verify --in " + out + " > /dev/null").c_str()) == 0);
    CHECK(std::system((cli + " stats --in " + out + " > /dev/null").c_str()) == 0);

    // unknown flag and missing required flag exit with 2
    CHECK(std::system((cli + " generate --nope 2>/dev/null").c_str()) != 0);
    const int missing = std::system((cli + " generate 2>/dev/null").c_str());
    CHECK(WEXITSTATUS(missing) == 2);
    const int bad_config =
        std::system((cli + " generate --config /nonexistent.json 2>/dev/null").c_str());
    CHECK(WEXITSTATUS(bad_config) == 2);
}

TEST_CASE("stats subcommand reproduces the fixture measurements") {
    const std::string cli = cli_path();
    const std::string out_path = tmp_path("dialoggen_stats_out.txt");
    REQUIRE(std::system((cli + " stats --in " + fixtures_dir() + "/sample_instances.jsonl > " +
                         out_path)
                            .c_str()) == 0);
    const std::string text = read_file(out_path);
    CHECK(text.find("3: 1") != std::string::npos);
    CHECK(text.find("4: 1") != std::string::npos);
    CHECK(text.find("mean assistant turns: 3.5") != std::string::npos);
}

TEST_CASE("worker pool generates valid instances concurrently") {
    GenerationConfig config = base_config(31);
    config.workers = 4;
    Pipeline pipeline = make_pipeline(config);
    const std::string out = tmp_path("dialoggen_workers.jsonl");
    const RunStats stats = pipeline.run(8, out);
    CHECK(stats.passed_verification == 8);

    GenerationConfig rules_only = base_config(31);
    rules_only.panel_enabled = false;
    Verifier verifier(nullptr, rules_only, nullptr);
    const auto instances = load_instances(out);
    REQUIRE(instances.size() == 8);
    for (const auto& instance : instances) {
        CHECK(verifier.verify(instance).passed);
    }
}

TEST_CASE("enrichment is rejected alongside a worker pool") {
    GenerationConfig config = base_config();
    config.enrich_examples = true;
    config.workers = 2;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.workers = 1;
    CHECK_NOTHROW(config.validate());
}

TEST_CASE("verify subcommand reports seeded faults without failing the process") {
    GenerationConfig config = base_config(33);
    Pipeline pipeline = make_pipeline(config);
    std::vector<Instance> instances;
    for (std::uint64_t attempt = 0; attempt < 3; ++attempt) {
        instances.push_back(pipeline.generate_instance(attempt));
    }
    // seed one unknown-tool fault into the middle instance
    for (auto& turn : instances[1].trajectory.turns) {
        if (classify_turn(turn) == TurnKind::AssistantCall) {
            turn.content = "[phantom_tool_zz(code='x1')]";
            break;
        }
    }
    const std::string in_path = tmp_path("dialoggen_cli_fault.jsonl");
    const std::string out_path = tmp_path("dialoggen_cli_fault_report.txt");
    emit_jsonl(instances, in_path);

    const int status = std::system(
        (cli_path() + " verify --in " + in_path + " > " + out_path).c_str());
    CHECK(WEXITSTATUS(status) == 0);  // the report conveys the failure, not the exit code
    const std::string text = read_file(out_path);
    CHECK(text.find("inst-000002: FAIL") != std::string::npos);
    CHECK(text.find("2/3 instances pass") != std::string::npos);
}
