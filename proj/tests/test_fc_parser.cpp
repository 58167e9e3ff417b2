#include <doctest.h>

#include <regex>

#include "dialoggen/fc_parser.hpp"
#include "dialoggen/rng.hpp"
#include "test_support.hpp"

using namespace dialoggen;
namespace fc = dialoggen::fc;

namespace {

// Random generator over the full value grammar; drives the round-trip
// property. Depth-bounded so trees stay small.
ParamValue random_value(Rng& rng, int depth) {
    const int pick = rng.uniform_int(0, depth >= 3 ? 5 : 7);
    switch (pick) {
        case 0: return ParamValue(nullptr);
        case 1: return ParamValue(rng.coin());
        case 2: return ParamValue(static_cast<std::int64_t>(rng.next() % 100000) - 50000);
        case 3: {
            const double value = (static_cast<double>(rng.uniform_int(-10000, 10000)) / 16.0);
            return ParamValue(value);
        }
        case 4:
        case 5: {
            static const char alphabet[] =
                " abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789'\"\\{}[](),=:_-.\n\t";
            std::string s;
            const int len = rng.uniform_int(0, 12);
            for (int i = 0; i < len; ++i) {
                s.push_back(alphabet[rng.uniform_int(0, sizeof(alphabet) - 2)]);
            }
            return ParamValue(std::move(s));
        }
        case 6: {
            ParamValue::Array items;
            const int len = rng.uniform_int(0, 3);
            for (int i = 0; i < len; ++i) {
                items.push_back(random_value(rng, depth + 1));
            }
            return ParamValue(std::move(items));
        }
        default: {
            ParamValue::Object members;
            const int len = rng.uniform_int(0, 3);
            for (int i = 0; i < len; ++i) {
                members.emplace_back("k" + std::to_string(i), random_value(rng, depth + 1));
            }
            return ParamValue(std::move(members));
        }
    }
}

std::vector<FunctionCall> random_call_list(Rng& rng) {
    std::vector<FunctionCall> calls;
    const int count = rng.uniform_int(0, 3);
    for (int c = 0; c < count; ++c) {
        FunctionCall call;
        call.name = "fn_" + std::to_string(rng.uniform_int(0, 20)) + (rng.coin() ? ".sub" : "");
        const int args = rng.uniform_int(0, 4);
        for (int a = 0; a < args; ++a) {
            call.args.emplace_back("arg" + std::to_string(a), random_value(rng, 0));
        }
        calls.push_back(std::move(call));
    }
    return calls;
}

// Independent oracle for extract_ids: flatten the value into text with
// spacing between atoms and scan with the documented patterns.
void flatten(const ParamValue& value, std::string& out) {
    if (value.is_string()) {
        out += value.as_string();
        out.push_back('\n');
    } else if (value.is_array()) {
        for (const auto& item : value.as_array()) {
            flatten(item, out);
        }
    } else if (value.is_object()) {
        for (const auto& [key, member] : value.as_object()) {
            flatten(member, out);
        }
    }
}

std::set<std::string> oracle_scan(const ParamValue& value) {
    std::string text;
    flatten(value, text);
    std::set<std::string> found;
    for (const auto& pattern : fc::default_id_patterns()) {
        std::regex re(pattern);
        for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
             it != std::sregex_iterator(); ++it) {
            found.insert(it->str());
        }
    }
    return found;
}

}  // namespace

TEST_CASE("parse_calls handles the booking example") {
    const auto calls = fc::parse_calls(
        "[book_flight(departure_city='Singapore', arrival_city='Shanghai', "
        "departure_date='2023-10-10')]");
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].name == "book_flight");
    REQUIRE(calls[0].args.size() == 3);
    CHECK(calls[0].args[0].first == "departure_city");
    CHECK(calls[0].args[0].second.as_string() == "Singapore");
    CHECK(calls[0].args[1].second.as_string() == "Shanghai");
    CHECK(calls[0].args[2].second.as_string() == "2023-10-10");
}

TEST_CASE("parse_calls handles parallel zero-arg calls") {
    const auto calls = fc::parse_calls("[get_curr_date(), get_curr_weekday()]");
    REQUIRE(calls.size() == 2);
    CHECK(calls[0].name == "get_curr_date");
    CHECK(calls[0].args.empty());
    CHECK(calls[1].name == "get_curr_weekday");
}

TEST_CASE("parse_calls rejects plain text at position 0") {
    try {
        fc::parse_calls("hello there");
        FAIL("expected SyntaxError");
    } catch (const fc::SyntaxError& err) {
        CHECK(err.position == 0);
    }
}

TEST_CASE("parse_calls flags duplicate arguments") {
    try {
        fc::parse_calls("[f(x=1, x=2)]");
        FAIL("expected DuplicateArg");
    } catch (const fc::DuplicateArg& err) {
        CHECK(err.name == "x");
    }
}

TEST_CASE("parse_calls accepts an empty list and assorted values") {
    CHECK(fc::parse_calls("[]").empty());
    CHECK(fc::parse_calls("  [ ]  ").empty());

    const auto calls = fc::parse_calls(
        "[f(a=1, b=-2.5, c=true, d=null, e=[1, 'two'], g={'k': 1, 'm': [false]})]");
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].args[0].second.as_integer() == 1);
    CHECK(calls[0].args[1].second.as_real() == -2.5);
    CHECK(calls[0].args[2].second.as_bool());
    CHECK(calls[0].args[3].second.is_null());
    CHECK(calls[0].args[4].second.as_array().size() == 2);
    CHECK(calls[0].args[5].second.as_object().size() == 2);
}

TEST_CASE("parse_calls accepts both quote styles and escapes") {
    const auto calls = fc::parse_calls(R"([f(a="double", b='it\'s', c='a\\b')])");
    CHECK(calls[0].args[0].second.as_string() == "double");
    CHECK(calls[0].args[1].second.as_string() == "it's");
    CHECK(calls[0].args[2].second.as_string() == "a\\b");
}

TEST_CASE("serialize_calls canonical form") {
    CHECK(fc::serialize_calls({FunctionCall{"f", {}}}) == "[f()]");

    FunctionCall call;
    call.name = "f";
    call.args.emplace_back("s", ParamValue("it's"));
    CHECK(fc::serialize_calls({call}) == R"([f(s='it\'s')])");

    FunctionCall a{"first", {{"x", ParamValue(std::int64_t(1))}}};
    FunctionCall b{"second", {{"y", ParamValue("two")}}};
    CHECK(fc::serialize_calls({a, b}) == "[first(x=1), second(y='two')]");
}

TEST_CASE("serializer keeps integers and reals distinct") {
    FunctionCall call{"f", {{"i", ParamValue(std::int64_t(2))}, {"r", ParamValue(2.0)}}};
    const std::string text = fc::serialize_calls({call});
    CHECK(text == "[f(i=2, r=2.0)]");
    const auto back = fc::parse_calls(text);
    CHECK(back[0].args[0].second.is_integer());
    CHECK(back[0].args[1].second.is_real());
}

TEST_CASE("round trip: parse(serialize(x)) == x over 1000 random call lists") {
    Rng rng(20240601);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto calls = random_call_list(rng);
        const std::string text = fc::serialize_calls(calls);
        CAPTURE(text);
        const auto reparsed = fc::parse_calls(text);
        REQUIRE(reparsed == calls);
    }
}

TEST_CASE("parse totality: garbage inputs fail in-bounds, never hang") {
    Rng rng(7);
    static const char alphabet[] = "[](){}'\",=abcXYZ019 .\\\n";
    for (int trial = 0; trial < 2000; ++trial) {
        std::string input;
        const int len = rng.uniform_int(0, 60);
        for (int i = 0; i < len; ++i) {
            input.push_back(alphabet[rng.uniform_int(0, sizeof(alphabet) - 2)]);
        }
        try {
            fc::parse_calls(input);
        } catch (const fc::SyntaxError& err) {
            CHECK(err.position <= input.size());
        } catch (const fc::DuplicateArg&) {
        }
    }
}

TEST_CASE("parse totality: 1 MB pathological nesting errors out cleanly") {
    std::string deep = "[f(a=";
    deep += std::string(1u << 20, '[');
    try {
        fc::parse_calls(deep);
        FAIL("expected SyntaxError");
    } catch (const fc::SyntaxError& err) {
        CHECK(err.position <= deep.size());
    }
}

TEST_CASE("parse_tool_output accepts arrays of objects only") {
    const auto results =
        fc::parse_tool_output(R"([{"current_date": "2023-10-05"}, {"current_weekday": "Thursday"}])");
    REQUIRE(results.size() == 2);
    CHECK(results[0].at("current_date") == "2023-10-05");

    CHECK(fc::parse_tool_output("[]").empty());

    CHECK_THROWS_AS(fc::parse_tool_output(R"({"a":1})"), fc::NotAnArray);
    CHECK_THROWS_AS(fc::parse_tool_output("[1, 2]"), fc::NotAnArray);
    CHECK_THROWS_AS(fc::parse_tool_output("not json"), fc::SyntaxError);
}

TEST_CASE("extract_ids matches the documented examples") {
    ParamValue::Object booking;
    booking.emplace_back("confirmation", ParamValue("Flight booked"));
    booking.emplace_back("booking_id", ParamValue("BK-88213"));
    const ParamValue value{booking};
    CHECK(fc::extract_ids(value) == std::set<std::string>{"BK-88213"});
    CHECK(fc::extract_ids(value) == oracle_scan(value));

    ParamValue::Object temp;
    temp.emplace_back("temp", ParamValue(21.5));
    CHECK(fc::extract_ids(ParamValue{temp}).empty());

    ParamValue::Object orders;
    orders.emplace_back("order", ParamValue("ORD_1"));
    orders.emplace_back("order2", ParamValue("ORD_2"));
    ParamValue nested{ParamValue::Array{ParamValue{orders}}};
    CHECK(fc::extract_ids(nested) == std::set<std::string>{"ORD_1", "ORD_2"});
    CHECK(fc::extract_ids(nested) == oracle_scan(nested));
}

TEST_CASE("extract_ids finds ids inside prose and hex/uuid shapes") {
    CHECK(fc::extract_ids(ParamValue("please cancel BK-9 today")) ==
          std::set<std::string>{"BK-9"});
    CHECK(fc::extract_ids(ParamValue("token deadbeefdeadbeef1234")) ==
          std::set<std::string>{"deadbeefdeadbeef1234"});
    CHECK(fc::extract_ids(ParamValue("id 123e4567-e89b-12d3-a456-426614174000")).size() == 1);
    CHECK(fc::extract_ids(ParamValue("plain words, 2024-06-01, nothing else")).empty());
}

TEST_CASE("extract_ids agrees with the oracle on random values") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const ParamValue value = random_value(rng, 0);
        CHECK(fc::extract_ids(value) == oracle_scan(value));
    }
}

TEST_CASE("extract_ids invariant under re-serialization") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        ParamValue value = random_value(rng, 0);
        const auto ids = fc::extract_ids(value);
        const auto reparsed = fc::parse_calls(
            fc::serialize_calls({FunctionCall{"f", {{"v", value}}}}));
        CHECK(fc::extract_ids(reparsed[0].args[0].second) == ids);
    }
}
