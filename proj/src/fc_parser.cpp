#include "dialoggen/fc_parser.hpp"

#include <charconv>
#include <cmath>
#include <regex>

namespace dialoggen::fc {

namespace {

constexpr int kMaxNestingDepth = 128;

bool is_ident_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}

bool is_ident_char(char c) {
    return is_ident_start(c) || (c >= '0' && c <= '9') || c == '.';
}

/// Hand-rolled recursive descent over the call grammar. Depth-limited so
/// pathological nesting fails with a positioned error instead of blowing the
/// stack.
class CallParser {
public:
    explicit CallParser(std::string_view text) : text_(text) {}

    std::vector<FunctionCall> parse_call_list() {
        skip_ws();
        expect('[', "'['");
        std::vector<FunctionCall> calls;
        skip_ws();
        if (peek() == ']') {
            ++pos_;
        } else {
            calls.push_back(parse_call());
            skip_ws();
            while (peek() == ',') {
                ++pos_;
                calls.push_back(parse_call());
                skip_ws();
            }
            expect(']', "',' or ']'");
        }
        skip_ws();
        if (pos_ != text_.size()) {
            throw SyntaxError(pos_, "end of input");
        }
        return calls;
    }

private:
    FunctionCall parse_call() {
        FunctionCall call;
        skip_ws();
        call.name = parse_identifier();
        skip_ws();
        expect('(', "'('");
        skip_ws();
        if (peek() != ')') {
            parse_arg(call);
            skip_ws();
            while (peek() == ',') {
                ++pos_;
                parse_arg(call);
                skip_ws();
            }
        }
        expect(')', "',' or ')'");
        return call;
    }

    void parse_arg(FunctionCall& call) {
        skip_ws();
        std::string name = parse_identifier();
        if (call.find_arg(name) != nullptr) {
            throw DuplicateArg(name);
        }
        skip_ws();
        expect('=', "'='");
        call.args.emplace_back(std::move(name), parse_value(0));
    }

    ParamValue parse_value(int depth) {
        if (depth > kMaxNestingDepth) {
            throw SyntaxError(pos_, "shallower nesting");
        }
        skip_ws();
        const char c = peek();
        if (c == '\'' || c == '"') {
            return ParamValue(parse_string());
        }
        if (c == '[') {
            return parse_array(depth);
        }
        if (c == '{') {
            return parse_object(depth);
        }
        if (c == 't' || c == 'f' || c == 'n') {
            return parse_keyword();
        }
        if (c == '-' || (c >= '0' && c <= '9')) {
            return parse_number();
        }
        throw SyntaxError(pos_, "a value");
    }

    ParamValue parse_array(int depth) {
        expect('[', "'['");
        ParamValue::Array items;
        skip_ws();
        if (peek() == ']') {
            ++pos_;
            return ParamValue(std::move(items));
        }
        items.push_back(parse_value(depth + 1));
        skip_ws();
        while (peek() == ',') {
            ++pos_;
            items.push_back(parse_value(depth + 1));
            skip_ws();
        }
        expect(']', "',' or ']'");
        return ParamValue(std::move(items));
    }

    ParamValue parse_object(int depth) {
        expect('{', "'{'");
        ParamValue::Object members;
        skip_ws();
        if (peek() == '}') {
            ++pos_;
            return ParamValue(std::move(members));
        }
        parse_member(members, depth);
        skip_ws();
        while (peek() == ',') {
            ++pos_;
            parse_member(members, depth);
            skip_ws();
        }
        expect('}', "',' or '}'");
        return ParamValue(std::move(members));
    }

    void parse_member(ParamValue::Object& members, int depth) {
        skip_ws();
        if (peek() != '\'' && peek() != '"') {
            throw SyntaxError(pos_, "a quoted key");
        }
        std::string key = parse_string();
        skip_ws();
        expect(':', "':'");
        members.emplace_back(std::move(key), parse_value(depth + 1));
    }

    ParamValue parse_keyword() {
        if (text_.substr(pos_, 4) == "true") {
            pos_ += 4;
            return ParamValue(true);
        }
        if (text_.substr(pos_, 5) == "false") {
            pos_ += 5;
            return ParamValue(false);
        }
        if (text_.substr(pos_, 4) == "null") {
            pos_ += 4;
            return ParamValue(nullptr);
        }
        throw SyntaxError(pos_, "true, false or null");
    }

    ParamValue parse_number() {
        const std::size_t start = pos_;
        if (peek() == '-') {
            ++pos_;
        }
        bool is_real = false;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c >= '0' && c <= '9') {
                ++pos_;
            } else if (c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-') {
                // '+'/'-' only valid inside an exponent; the from_chars pass
                // below rejects stray signs.
                if (c == '+' || c == '-') {
                    const char prev = text_[pos_ - 1];
                    if (prev != 'e' && prev != 'E') {
                        break;
                    }
                } else {
                    is_real = true;
                }
                ++pos_;
            } else {
                break;
            }
        }
        const std::string_view token = text_.substr(start, pos_ - start);
        if (token.empty() || token == "-") {
            throw SyntaxError(start, "a number");
        }
        if (!is_real) {
            std::int64_t integer = 0;
            auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), integer);
            if (ec == std::errc() && ptr == token.data() + token.size()) {
                return ParamValue(integer);
            }
            // out of int64 range: fall through to real
        }
        double real = 0.0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), real);
        if (ec != std::errc() || ptr != token.data() + token.size()) {
            throw SyntaxError(start, "a number");
        }
        return ParamValue(real);
    }

    std::string parse_string() {
        const char quote = peek();
        ++pos_;
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == quote) {
                ++pos_;
                return out;
            }
            if (c == '\\') {
                ++pos_;
                if (pos_ >= text_.size()) {
                    break;
                }
                const char esc = text_[pos_++];
                switch (esc) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    default: out.push_back(esc); break;  // \' \" \\ and any other char literally
                }
            } else {
                out.push_back(c);
                ++pos_;
            }
        }
        throw SyntaxError(text_.size(), "closing quote");
    }

    std::string parse_identifier() {
        if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) {
            throw SyntaxError(pos_, "an identifier");
        }
        const std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) {
            ++pos_;
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    void expect(char c, const char* what) {
        if (pos_ >= text_.size() || text_[pos_] != c) {
            throw SyntaxError(pos_, what);
        }
        ++pos_;
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_ws() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

void serialize_string(const std::string& s, std::string& out) {
    out.push_back('\'');
    for (char c : s) {
        switch (c) {
            case '\'': out += "\\'"; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c); break;
        }
    }
    out.push_back('\'');
}

void serialize_value_into(const ParamValue& value, std::string& out);

void serialize_real(double d, std::string& out) {
    char buffer[32];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), d);
    std::string_view printed(buffer, ptr - buffer);
    out += printed;
    // Keep reals distinguishable from integers on reparse.
    if (printed.find('.') == std::string_view::npos &&
        printed.find('e') == std::string_view::npos &&
        printed.find("inf") == std::string_view::npos &&
        printed.find("nan") == std::string_view::npos) {
        out += ".0";
    }
}

void serialize_value_into(const ParamValue& value, std::string& out) {
    if (value.is_null()) {
        out += "null";
    } else if (value.is_bool()) {
        out += value.as_bool() ? "true" : "false";
    } else if (value.is_integer()) {
        out += std::to_string(value.as_integer());
    } else if (value.is_real()) {
        serialize_real(value.as_real(), out);
    } else if (value.is_string()) {
        serialize_string(value.as_string(), out);
    } else if (value.is_array()) {
        out.push_back('[');
        const auto& items = value.as_array();
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i > 0) {
                out += ", ";
            }
            serialize_value_into(items[i], out);
        }
        out.push_back(']');
    } else {
        out.push_back('{');
        const auto& members = value.as_object();
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i > 0) {
                out += ", ";
            }
            serialize_string(members[i].first, out);
            out += ": ";
            serialize_value_into(members[i].second, out);
        }
        out.push_back('}');
    }
}

void collect_ids(const std::string& text, const std::vector<std::regex>& patterns,
                 std::set<std::string>& out) {
    for (const auto& pattern : patterns) {
        auto begin = std::sregex_iterator(text.begin(), text.end(), pattern);
        for (auto it = begin; it != std::sregex_iterator(); ++it) {
            out.insert(it->str());
        }
    }
}

void walk_value(const ParamValue& value, const std::vector<std::regex>& patterns,
                std::set<std::string>& out) {
    if (value.is_string()) {
        collect_ids(value.as_string(), patterns, out);
    } else if (value.is_array()) {
        for (const auto& item : value.as_array()) {
            walk_value(item, patterns, out);
        }
    } else if (value.is_object()) {
        for (const auto& [key, member] : value.as_object()) {
            walk_value(member, patterns, out);
        }
    }
}

void walk_json(const nlohmann::ordered_json& value, const std::vector<std::regex>& patterns,
               std::set<std::string>& out) {
    if (value.is_string()) {
        collect_ids(value.get<std::string>(), patterns, out);
    } else if (value.is_array() || value.is_object()) {
        for (const auto& item : value) {
            walk_json(item, patterns, out);
        }
    }
}

std::vector<std::regex> compile_patterns(const std::vector<std::string>& patterns) {
    std::vector<std::regex> compiled;
    compiled.reserve(patterns.size());
    for (const auto& pattern : patterns) {
        compiled.emplace_back(pattern);
    }
    return compiled;
}

const std::vector<std::regex>& default_compiled_patterns() {
    static const std::vector<std::regex> patterns = compile_patterns(default_id_patterns());
    return patterns;
}

}  // namespace

std::vector<FunctionCall> parse_calls(std::string_view text) {
    return CallParser(text).parse_call_list();
}

bool looks_like_calls(std::string_view text) {
    try {
        parse_calls(text);
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

std::string serialize_calls(const std::vector<FunctionCall>& calls) {
    std::string out = "[";
    for (std::size_t i = 0; i < calls.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += calls[i].name;
        out.push_back('(');
        const auto& args = calls[i].args;
        for (std::size_t a = 0; a < args.size(); ++a) {
            if (a > 0) {
                out += ", ";
            }
            out += args[a].first;
            out.push_back('=');
            serialize_value_into(args[a].second, out);
        }
        out.push_back(')');
    }
    out.push_back(']');
    return out;
}

std::string serialize_value(const ParamValue& value) {
    std::string out;
    serialize_value_into(value, out);
    return out;
}

std::vector<nlohmann::ordered_json> parse_tool_output(std::string_view text) {
    nlohmann::ordered_json decoded;
    try {
        decoded = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
        throw SyntaxError(static_cast<std::size_t>(err.byte > 0 ? err.byte - 1 : 0), "a JSON array");
    }
    if (!decoded.is_array()) {
        throw NotAnArray("tool output must be an array of result objects");
    }
    std::vector<nlohmann::ordered_json> results;
    results.reserve(decoded.size());
    for (const auto& item : decoded) {
        if (!item.is_object()) {
            throw NotAnArray("tool output element is not an object");
        }
        results.push_back(item);
    }
    return results;
}

const std::vector<std::string>& default_id_patterns() {
    static const std::vector<std::string> patterns = {
        R"([A-Z]{2,}[-_][A-Za-z0-9]+)",
        R"([0-9a-fA-F]{16,})",
        R"([0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12})",
    };
    return patterns;
}

std::set<std::string> extract_ids(const ParamValue& value) {
    std::set<std::string> out;
    walk_value(value, default_compiled_patterns(), out);
    return out;
}

std::set<std::string> extract_ids(const ParamValue& value, const std::vector<std::string>& patterns) {
    std::set<std::string> out;
    walk_value(value, compile_patterns(patterns), out);
    return out;
}

std::set<std::string> extract_ids(const nlohmann::ordered_json& value) {
    std::set<std::string> out;
    walk_json(value, default_compiled_patterns(), out);
    return out;
}

std::set<std::string> extract_ids(const nlohmann::ordered_json& value,
                                  const std::vector<std::string>& patterns) {
    std::set<std::string> out;
    walk_json(value, compile_patterns(patterns), out);
    return out;
}

std::set<std::string> extract_ids_from_text(std::string_view text) {
    std::set<std::string> out;
    collect_ids(std::string(text), default_compiled_patterns(), out);
    return out;
}

std::set<std::string> extract_ids_from_text(std::string_view text,
                                            const std::vector<std::string>& patterns) {
    std::set<std::string> out;
    collect_ids(std::string(text), compile_patterns(patterns), out);
    return out;
}

nlohmann::ordered_json to_json(const ParamValue& value) {
    using json = nlohmann::ordered_json;
    if (value.is_null()) return nullptr;
    if (value.is_bool()) return value.as_bool();
    if (value.is_integer()) return value.as_integer();
    if (value.is_real()) return value.as_real();
    if (value.is_string()) return value.as_string();
    if (value.is_array()) {
        json arr = json::array();
        for (const auto& item : value.as_array()) {
            arr.push_back(to_json(item));
        }
        return arr;
    }
    json obj = json::object();
    for (const auto& [key, member] : value.as_object()) {
        obj[key] = to_json(member);
    }
    return obj;
}

ParamValue param_value_from_json(const nlohmann::ordered_json& value) {
    if (value.is_null()) return ParamValue(nullptr);
    if (value.is_boolean()) return ParamValue(value.get<bool>());
    if (value.is_number_integer() || value.is_number_unsigned()) {
        return ParamValue(value.get<std::int64_t>());
    }
    if (value.is_number_float()) return ParamValue(value.get<double>());
    if (value.is_string()) return ParamValue(value.get<std::string>());
    if (value.is_array()) {
        ParamValue::Array items;
        for (const auto& item : value) {
            items.push_back(param_value_from_json(item));
        }
        return ParamValue(std::move(items));
    }
    ParamValue::Object members;
    for (const auto& [key, member] : value.items()) {
        members.emplace_back(key, param_value_from_json(member));
    }
    return ParamValue(std::move(members));
}

}  // namespace dialoggen::fc
