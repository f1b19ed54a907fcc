#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace tg {

/// Behaviour of an extern method that is neither source, sink nor sanitizer.
enum class ExternKind {
    Void,        // consumes its args, returns nothing
    Identity,    // returns its first argument
    Concat,      // returns the concatenation of its arguments
    OracleInput, // returns a value supplied by the test input
};

/// External configuration giving semantics to extern methods and naming the
/// source / sink / sanitizer sets. Methods are identified by their full key
/// `Class.name/arity`.
struct TaintConfig {
    std::set<std::string> sources;
    std::map<std::string, int> sinks; // key -> tainted argument position
    std::set<std::string> sanitizers;
    std::map<std::string, ExternKind> externs;
    std::string entry_pattern = ".*Request$";

    bool is_source(const std::string& key) const { return sources.count(key) > 0; }
    bool is_sink(const std::string& key) const { return sinks.count(key) > 0; }
    bool is_sanitizer(const std::string& key) const { return sanitizers.count(key) > 0; }

    /// Role of an extern method for stack-effect purposes.
    enum class Role { Source, Sink, Sanitizer, Extern, Unknown };
    Role role_of(const std::string& key) const;

    /// Whether a call to this extern method pushes a result. Sources and
    /// sanitizers return values, sinks do not; plain externs follow their
    /// declared kind. Unknown methods default to void (callers should warn).
    bool extern_returns_value(const std::string& key) const;
};

TaintConfig parse_taint_config(const nlohmann::json& j);
TaintConfig load_taint_config(const std::string& path);

/// One concrete test stimulus for the interpreter: argument values for the
/// entry method plus per-occurrence return values for oracle-input externs.
/// `extern_returns["Cls.m/2"]["0"]` feeds the first occurrence; the key "*"
/// declares a default for unmapped occurrences.
struct TestInput {
    uint64_t seed = 0;
    std::vector<nlohmann::json> endpoint_args;
    std::map<std::string, std::map<std::string, nlohmann::json>> extern_returns;

    nlohmann::json to_json() const;
};

TestInput parse_test_input(const nlohmann::json& j);
std::vector<TestInput> load_test_inputs(const std::string& path);

} // namespace tg
