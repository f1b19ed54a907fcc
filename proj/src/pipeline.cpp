#include "tg/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>

#include "tg/pseudo.hpp"
#include "tg/slicer.hpp"

namespace tg {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::string sanitize_endpoint(const std::string& key) {
    std::string out;
    for (char c : key) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '-' || c == '_';
        out += ok ? c : '_';
    }
    return out;
}

namespace {

EndpointResult extract_endpoint(const Program& p, const TaintConfig& cfg, const MethodId& ep,
                                const PipelineOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    EndpointResult er;
    er.endpoint = ep;

    Scope scope = global_slice(p, cfg, ep, opt.mode);
    EmuResult emu = emulate_endpoint(p, cfg, ep, scope, opt.limits, opt.policy);
    er.status = emu.status;
    er.messages = emu.messages;

    std::set<uint64_t> seen;
    for (const Trace& t : emu.traces) {
        Gadget g = assemble_gadget(p, t, slice_trace(t));
        std::string rendering = pseudo_text(build_pseudo(g.program, cfg, g.entry, "TG"));
        uint64_t h = fnv1a64(rendering);
        if (!seen.insert(h).second) continue; // duplicate gadget
        er.gadgets.push_back(std::move(g));
        er.pseudo.push_back(std::move(rendering));
        er.hashes.push_back(h);
    }

    er.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return er;
}

} // namespace

PipelineResult run_pipeline(const Program& p, const TaintConfig& cfg, const PipelineOptions& opt) {
    std::vector<MethodId> eps = identify_endpoints(p, cfg);
    PipelineResult res;
    if (opt.jobs > 1 && eps.size() > 1) {
        std::vector<std::future<EndpointResult>> futs;
        for (const MethodId& ep : eps)
            futs.push_back(std::async(std::launch::async,
                                      [&, ep] { return extract_endpoint(p, cfg, ep, opt); }));
        for (auto& f : futs) res.endpoints.push_back(f.get());
    } else {
        for (const MethodId& ep : eps) res.endpoints.push_back(extract_endpoint(p, cfg, ep, opt));
    }
    return res;
}

int write_artifacts(const PipelineResult& r, const std::string& out_dir) {
    namespace fs = std::filesystem;
    int written = 0;
    for (const EndpointResult& er : r.endpoints) {
        fs::path dir = fs::path(out_dir) / sanitize_endpoint(er.endpoint.key());
        fs::create_directories(dir);
        for (size_t i = 0; i < er.gadgets.size(); ++i) {
            std::string stem = hash_hex(er.hashes[i]);
            {
                std::ofstream f(dir / (stem + ".gasm"));
                f << er.gadgets[i].gasm_text;
                ++written;
            }
            {
                std::ofstream f(dir / (stem + ".pseudo"));
                f << er.pseudo[i];
                ++written;
            }
        }
    }
    return written;
}

} // namespace tg
