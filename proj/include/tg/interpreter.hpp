#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/gasm.hpp"

namespace tg {

/// One recorded sink invocation: the call site (enclosing method and
/// instruction index) plus the resolved sink key and the concrete argument
/// values rendered to unambiguous text (`null`, decimal, quoted string, or
/// `obj:Cls#id`).
struct SinkCall {
    std::string method_key;
    int instr_index = 0;
    std::string callee;
    std::vector<std::string> args;

    bool operator==(const SinkCall&) const = default;
};

enum class RunStatus { Ok, Threw, Errored, Timeout };

const char* run_status_name(RunStatus s);

struct RunResult {
    RunStatus status = RunStatus::Ok;
    std::string message; // thrown value or error description
    std::vector<SinkCall> sink_calls;
    long steps = 0;
    double elapsed_ms = 0.0;
};

struct RunLimits {
    long max_steps = 100000;
    int max_depth = 256;
};

/// Executes `method` concretely. Arguments come from `input.endpoint_args`;
/// a null entry for a parameter with a declared class materializes as a
/// fresh empty object of that class. Source and oracle-input externs take
/// their return values from `input.extern_returns` by per-key occurrence
/// (falling back to the "*" entry); a source call with no mapping is a run
/// error. Sanitizers return their first argument unchanged. Static
/// initializers run lazily, superclass first, triggered by `new`, static
/// field access and static calls.
RunResult run_method(const Program& p, const TaintConfig& cfg, const MethodId& method,
                     const TestInput& input, const RunLimits& limits = {});

} // namespace tg
