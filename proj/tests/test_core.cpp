#include <doctest.h>

#include "dialoggen/core.hpp"
#include "dialoggen/fc_parser.hpp"
#include "dialoggen/pipeline.hpp"
#include "dialoggen/rng.hpp"
#include "test_support.hpp"

using namespace dialoggen;
using namespace test_support;

TEST_CASE("role strings: exactly four accepted") {
    CHECK(role_from_string("system") == Role::System);
    CHECK(role_from_string("user") == Role::User);
    CHECK(role_from_string("assistant") == Role::Assistant);
    CHECK(role_from_string("tool") == Role::Tool);
    CHECK(!role_from_string("function"));
    CHECK(!role_from_string("Assistant"));
    CHECK(!role_from_string(""));
}

TEST_CASE("classify_turn") {
    CHECK(classify_turn(assistant("[get_curr_date(), get_curr_weekday()]")) ==
          TurnKind::AssistantCall);
    CHECK(classify_turn(assistant("Could you provide your departure city?")) ==
          TurnKind::AssistantText);
    CHECK(classify_turn(user("Singapore.")) == TurnKind::UserMessage);
    CHECK(classify_turn(tool_turn("[{}]")) == TurnKind::ToolOutput);
    CHECK(classify_turn(system_turn("anything")) == TurnKind::System);
    // parse failure is not an error, just text
    CHECK(classify_turn(assistant("[broken(")) == TurnKind::AssistantText);
    // an empty call list still parses; downstream format checks reject it
    CHECK(classify_turn(assistant("[]")) == TurnKind::AssistantCall);
}

TEST_CASE("classify_turn agrees with the serializer for generated call lists") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        FunctionCall call;
        call.name = "tool_" + std::to_string(rng.uniform_int(0, 9));
        if (rng.coin()) {
            call.args.emplace_back("q", ParamValue("v" + std::to_string(trial)));
        }
        CHECK(classify_turn(assistant(fc::serialize_calls({call}))) == TurnKind::AssistantCall);
    }
}

TEST_CASE("check_alternation accepts the sample dialogue and the bundled fixture") {
    CHECK(check_alternation(sample_trajectory()).empty());

    const auto instances = load_instances(fixtures_dir() + "/sample_instances.jsonl");
    REQUIRE(instances.size() == 2);
    for (const auto& instance : instances) {
        CHECK(check_alternation(instance.trajectory).empty());
    }
}

TEST_CASE("check_alternation minimal cases") {
    Trajectory ok;
    ok.turns = {user("hi"), assistant("hello!")};
    CHECK(check_alternation(ok).empty());

    Trajectory missing_tool;
    missing_tool.turns = {user("hi"), assistant("[f()]"), user("and?")};
    const auto violations = check_alternation(missing_tool);
    REQUIRE(!violations.empty());
    CHECK(violations[0].index == 1);
    CHECK(violations[0].rule == "call-followed-by-tool");
}

TEST_CASE("check_alternation flags each rule") {
    Trajectory t;

    t.turns = {assistant("hello")};
    CHECK(check_alternation(t)[0].rule == "first-turn-user");

    t.turns = {user("hi"), assistant("ok"), user("more"), assistant("done"), user("bye")};
    CHECK(check_alternation(t).back().rule == "final-turn-assistant");

    t.turns = {user("hi"), tool_turn("[{}]"), assistant("done")};
    bool tool_rule = false;
    for (const auto& v : check_alternation(t)) {
        tool_rule = tool_rule || (v.rule == "tool-after-call" && v.index == 1);
    }
    CHECK(tool_rule);

    t.turns = {user("hi"), user("hi again"), assistant("done")};
    CHECK(check_alternation(t)[0].rule == "user-followed-by-assistant");

    t.turns = {user("hi"), system_turn("nope"), assistant("done")};
    bool misplaced_system = false;
    for (const auto& v : check_alternation(t)) {
        misplaced_system = misplaced_system || (v.rule == "system-only-at-start" && v.index == 1);
    }
    CHECK(misplaced_system);

    t.turns = {};
    CHECK(check_alternation(t)[0].rule == "empty-trajectory");
}

TEST_CASE("reversing any adjacent call/tool pair breaks a clean trajectory") {
    const Trajectory clean = sample_trajectory();
    for (std::size_t i = 0; i + 1 < clean.turns.size(); ++i) {
        if (classify_turn(clean.turns[i]) != TurnKind::AssistantCall ||
            clean.turns[i + 1].role != Role::Tool) {
            continue;
        }
        Trajectory swapped = clean;
        std::swap(swapped.turns[i], swapped.turns[i + 1]);
        CHECK(!check_alternation(swapped).empty());
    }
}

TEST_CASE("tools_in_effect_at honors introduction points") {
    Trajectory t = sample_trajectory();
    ToolSpec late{"late_tool", "arrives mid-dialogue", {}};
    t.added_tools.push_back(AddedTool{late, 5});

    auto names_at = [&](int index) {
        std::set<std::string> names;
        for (const ToolSpec* tool : t.tools_in_effect_at(index)) {
            names.insert(tool->name);
        }
        return names;
    };
    CHECK(!names_at(4).count("late_tool"));
    CHECK(names_at(5).count("late_tool"));
    CHECK(names_at(10).count("late_tool"));
    CHECK(t.find_tool("late_tool") != nullptr);
}

TEST_CASE("RefinementState splice bookkeeping") {
    RefinementState state;
    state.turn_states.assign(5, TurnState{});
    state.turn_states[2].weight = 0.5;
    state.turn_states[2].refined = true;
    state.turn_states[4].weight = 0.25;

    state.apply_splice(2, 1, 3);  // one turn replaced by three
    REQUIRE(state.turn_states.size() == 7);
    CHECK(state.turn_states[2].weight == 1.0);   // fresh turns enter at weight 1.0
    CHECK(!state.turn_states[2].refined);
    CHECK(state.turn_states[6].weight == 0.25);  // the old tail moved over
}

TEST_CASE("all_refined skips the system slot") {
    RefinementState state;
    state.turn_states.assign(3, TurnState{});
    CHECK(!state.all_refined());
    state.turn_states[1].refined = true;
    state.turn_states[2].refined = true;
    CHECK(state.all_refined());  // index 0 (system) never needs refinement
}

TEST_CASE("GenerationConfig validation") {
    GenerationConfig config = base_config();
    CHECK_NOTHROW(config.validate());

    config.weight_decay_factor = 1.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = base_config();
    config.subtask_range = {5, 2};
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = base_config();
    config.mask_count_range = {1, 40};
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = base_config();
    config.workers = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("splice_turns returns an edited copy") {
    const Trajectory original = sample_trajectory();
    const Trajectory edited =
        splice_turns(original, 2, 1, {assistant("[x()]"), tool_turn("[{}]"), assistant("[y()]")});
    CHECK(edited.turns.size() == original.turns.size() + 2);
    CHECK(original.turns[2].content == "[get_curr_date()]");  // source untouched
    CHECK(edited.turns[2].content == "[x()]");
    CHECK(edited.turns[4].content == "[y()]");
    CHECK(edited.turns[5].content == original.turns[3].content);
}
