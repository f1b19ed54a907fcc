#include "tg/difftest.hpp"

#include <algorithm>

namespace tg {
namespace {

using CallSeq = std::vector<std::pair<std::string, std::vector<std::string>>>;

CallSeq full_sequence(const RunResult& r) {
    CallSeq out;
    for (const SinkCall& sc : r.sink_calls) out.push_back({sc.callee, sc.args});
    return out;
}

CallSeq at_site(const RunResult& r, const SinkSite& site) {
    CallSeq out;
    for (const SinkCall& sc : r.sink_calls)
        if (sc.method_key == site.method_key && sc.instr_index == site.instr_index)
            out.push_back({sc.callee, sc.args});
    return out;
}

} // namespace

bool DiffReport::all_pass() const {
    return std::all_of(inputs.begin(), inputs.end(), [](const InputVerdict& v) { return v.pass; });
}

double DiffReport::pass_rate() const {
    if (inputs.empty()) return 1.0;
    int n = 0;
    for (const InputVerdict& v : inputs) n += v.pass ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(inputs.size());
}

DiffReport difftest_endpoint(const Program& p, const TaintConfig& cfg, const EndpointResult& er,
                             const std::vector<TestInput>& inputs, const RunLimits& rl) {
    DiffReport rep;
    rep.endpoint = er.endpoint;
    for (const TestInput& in : inputs) {
        InputVerdict v;
        v.seed = in.seed;
        RunResult oracle = run_method(p, cfg, er.endpoint, in, rl);

        if (oracle.sink_calls.empty()) {
            // Nothing reached a sink: every gadget must stay silent too.
            v.pass = true;
            for (size_t i = 0; i < er.gadgets.size(); ++i) {
                const Gadget& g = er.gadgets[i];
                RunResult grun = run_method(g.program, cfg, g.entry, in, rl);
                if (!grun.sink_calls.empty()) {
                    v.pass = false;
                    v.detail = "oracle is silent but gadget " + hash_hex(er.hashes[i]) +
                               " reaches its sink";
                    break;
                }
            }
        } else {
            // Some gadget must reproduce the oracle's calls at its own site.
            for (size_t i = 0; i < er.gadgets.size() && !v.pass; ++i) {
                const Gadget& g = er.gadgets[i];
                CallSeq want = at_site(oracle, g.site);
                if (want.empty()) continue; // this input never touches that site
                RunResult grun = run_method(g.program, cfg, g.entry, in, rl);
                if (full_sequence(grun) == want) v.pass = true;
            }
            if (!v.pass) v.detail = "no gadget reproduces the oracle's sink sequence";
        }
        rep.inputs.push_back(std::move(v));
    }
    return rep;
}

std::vector<DiffReport> difftest_program(const Program& p, const TaintConfig& cfg,
                                         const std::vector<TestInput>& inputs,
                                         const PipelineOptions& opt, const RunLimits& rl) {
    PipelineResult pr = run_pipeline(p, cfg, opt);
    std::vector<DiffReport> out;
    for (const EndpointResult& er : pr.endpoints)
        out.push_back(difftest_endpoint(p, cfg, er, inputs, rl));
    return out;
}

Accounting account_generation(const std::vector<EndpointResult>& endpoints) {
    Accounting a;
    a.total = static_cast<int>(endpoints.size());
    std::vector<double> times;
    double sum = 0.0;
    for (const EndpointResult& er : endpoints) {
        a.counts[endpoint_status_name(er.status)]++;
        times.push_back(er.elapsed_ms);
        sum += er.elapsed_ms;
    }
    if (a.total == 0) return a;
    for (const auto& [name, n] : a.counts)
        a.proportions[name] = static_cast<double>(n) / static_cast<double>(a.total);
    std::sort(times.begin(), times.end());
    size_t n = times.size();
    a.median_ms = (n % 2 == 1) ? times[n / 2] : (times[n / 2 - 1] + times[n / 2]) / 2.0;
    a.mean_ms = sum / static_cast<double>(n);
    return a;
}

} // namespace tg
