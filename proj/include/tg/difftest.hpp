#pragma once

#include <map>
#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/interpreter.hpp"
#include "tg/pipeline.hpp"

namespace tg {

struct InputVerdict {
    uint64_t seed = 0;
    bool pass = false;
    std::string detail; // empty when passing
};

struct DiffReport {
    MethodId endpoint;
    std::vector<InputVerdict> inputs;

    bool all_pass() const;
    double pass_rate() const; // 1.0 when there are no inputs
};

/// Replays the original program (the oracle) and every gadget on each input.
/// An input passes when either the oracle and all gadget runs are silent, or
/// some gadget's sink-call sequence equals the oracle's calls at that
/// gadget's origin site (callee and argument values, in order).
DiffReport difftest_endpoint(const Program& p, const TaintConfig& cfg, const EndpointResult& er,
                             const std::vector<TestInput>& inputs, const RunLimits& rl = {});

/// Runs the pipeline first, then difftests every endpoint.
std::vector<DiffReport> difftest_program(const Program& p, const TaintConfig& cfg,
                                         const std::vector<TestInput>& inputs,
                                         const PipelineOptions& opt = {},
                                         const RunLimits& rl = {});

/// Generation accounting: endpoints bucketed by extraction status, plus
/// timing aggregates. Proportions sum to one whenever `total` is non-zero.
struct Accounting {
    int total = 0;
    std::map<std::string, int> counts;
    std::map<std::string, double> proportions;
    double median_ms = 0.0;
    double mean_ms = 0.0;
};

Accounting account_generation(const std::vector<EndpointResult>& endpoints);

} // namespace tg
