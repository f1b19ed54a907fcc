#include "tg/config.hpp"

#include <fstream>

namespace tg {
namespace {

using nlohmann::json;

json loadJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

std::string methodKey(const json& entry, const char* section) {
    if (!entry.is_object() || !entry.contains("method") || !entry["method"].is_string())
        throw std::runtime_error(std::string(section) + " entries need a \"method\" string");
    return entry["method"].get<std::string>();
}

ExternKind parseKind(const std::string& kind) {
    if (kind == "void") return ExternKind::Void;
    if (kind == "identity") return ExternKind::Identity;
    if (kind == "concat") return ExternKind::Concat;
    if (kind == "oracle-input") return ExternKind::OracleInput;
    throw std::runtime_error("unknown extern kind '" + kind + "'");
}

} // namespace

TaintConfig::Role TaintConfig::role_of(const std::string& key) const {
    if (is_source(key)) return Role::Source;
    if (is_sink(key)) return Role::Sink;
    if (is_sanitizer(key)) return Role::Sanitizer;
    if (externs.count(key)) return Role::Extern;
    return Role::Unknown;
}

bool TaintConfig::extern_returns_value(const std::string& key) const {
    switch (role_of(key)) {
        case Role::Source: return true;
        case Role::Sanitizer: return true;
        case Role::Sink: return false;
        case Role::Extern: return externs.at(key) != ExternKind::Void;
        case Role::Unknown: return false;
    }
    return false;
}

TaintConfig parse_taint_config(const json& j) {
    if (!j.is_object()) throw std::runtime_error("taint config must be a JSON object");
    TaintConfig cfg;
    for (const auto& e : j.value("sources", json::array()))
        cfg.sources.insert(methodKey(e, "sources"));
    for (const auto& e : j.value("sinks", json::array())) {
        std::string key = methodKey(e, "sinks");
        if (!e.contains("tainted_arg") || !e["tainted_arg"].is_number_integer())
            throw std::runtime_error("sink '" + key + "' needs an integer \"tainted_arg\"");
        cfg.sinks[key] = e["tainted_arg"].get<int>();
    }
    for (const auto& e : j.value("sanitizers", json::array()))
        cfg.sanitizers.insert(methodKey(e, "sanitizers"));
    for (const auto& e : j.value("externs", json::array())) {
        std::string key = methodKey(e, "externs");
        if (!e.contains("kind") || !e["kind"].is_string())
            throw std::runtime_error("extern '" + key + "' needs a \"kind\" string");
        cfg.externs[key] = parseKind(e["kind"].get<std::string>());
    }
    if (j.contains("entry_pattern")) cfg.entry_pattern = j["entry_pattern"].get<std::string>();
    return cfg;
}

TaintConfig load_taint_config(const std::string& path) {
    return parse_taint_config(loadJsonFile(path));
}

json TestInput::to_json() const {
    json j;
    j["seed"] = seed;
    j["endpoint_args"] = endpoint_args;
    json er = json::object();
    for (const auto& [method, occ] : extern_returns) {
        json m = json::object();
        for (const auto& [idx, val] : occ) m[idx] = val;
        er[method] = m;
    }
    j["extern_returns"] = er;
    return j;
}

TestInput parse_test_input(const json& j) {
    if (!j.is_object()) throw std::runtime_error("test input must be a JSON object");
    TestInput in;
    in.seed = j.value("seed", 0u);
    for (const auto& v : j.value("endpoint_args", json::array())) in.endpoint_args.push_back(v);
    if (j.contains("extern_returns")) {
        for (const auto& [method, occ] : j["extern_returns"].items()) {
            if (!occ.is_object())
                throw std::runtime_error("extern_returns entries must map occurrence -> value");
            for (const auto& [idx, val] : occ.items()) in.extern_returns[method][idx] = val;
        }
    }
    return in;
}

std::vector<TestInput> load_test_inputs(const std::string& path) {
    json j = loadJsonFile(path);
    std::vector<TestInput> out;
    if (j.is_array()) {
        for (const auto& e : j) out.push_back(parse_test_input(e));
    } else if (j.is_object() && j.contains("inputs")) {
        for (const auto& e : j["inputs"]) out.push_back(parse_test_input(e));
    } else {
        out.push_back(parse_test_input(j));
    }
    return out;
}

} // namespace tg
