#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tg/assembler.hpp"
#include "tg/config.hpp"
#include "tg/emulator.hpp"
#include "tg/gasm.hpp"
#include "tg/hierarchy.hpp"

namespace tg {

struct PipelineOptions {
    EmuLimits limits;
    CallMode mode = CallMode::Cha;
    ForkPolicy policy = ForkPolicy::Fifo;
    int jobs = 1; // endpoints processed in parallel when > 1
};

/// Everything extraction produced for one endpoint. `gadgets`, `pseudo` and
/// `hashes` are index-aligned and deduplicated: gadgets whose pseudo
/// rendering hashes identically keep only their first occurrence, in the
/// canonical (site, path) order the emulator emits.
struct EndpointResult {
    MethodId endpoint;
    EndpointStatus status = EndpointStatus::Ok;
    std::vector<Gadget> gadgets;
    std::vector<std::string> pseudo;
    std::vector<uint64_t> hashes;
    double elapsed_ms = 0.0;
    std::vector<std::string> messages;
};

struct PipelineResult {
    std::vector<EndpointResult> endpoints;
};

/// Runs the full extraction for every endpoint of `p`: global slicing,
/// forking emulation, trace slicing, gadget assembly and pseudo rendering.
PipelineResult run_pipeline(const Program& p, const TaintConfig& cfg,
                            const PipelineOptions& opt = {});

uint64_t fnv1a64(const std::string& s);

/// 16 hex digits of the rendering hash: the artifact file stem.
std::string hash_hex(uint64_t h);

/// File-system-safe form of an endpoint key ('/' and other separators
/// become '_').
std::string sanitize_endpoint(const std::string& key);

/// Writes `<out>/<endpoint>/<hash>.gasm` and `.pseudo` per gadget.
/// Returns the number of files written.
int write_artifacts(const PipelineResult& r, const std::string& out_dir);

} // namespace tg
