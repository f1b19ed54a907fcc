#pragma once

#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/pipeline.hpp"
#include "tg/pseudo.hpp"

namespace tg {

/// Function-level granularity: pseudo renderings of the endpoint and every
/// bodied method it can transitively call. This is what an analyst reads
/// when detection only names the function.
std::vector<PseudoFunc> function_baseline(const Program& p, const TaintConfig& cfg,
                                          const MethodId& endpoint);

/// Statement-level, path-insensitive backward slice from one sink call (a
/// "code gadget"). The slice keeps every statement the sink argument may
/// depend on — both arms of a conditional when each can define the value —
/// plus the enclosing control headers, and follows calls back up to the
/// endpoint.
struct SiteSlice {
    std::string method_key;        // method that holds the sink statement
    std::vector<PseudoFunc> funcs; // sliced renderings, endpoint first
};

std::vector<SiteSlice> code_gadget_baseline(const Program& p, const TaintConfig& cfg,
                                            const MethodId& endpoint);

int token_count(const PseudoFunc& f);
int token_count(const std::vector<PseudoFunc>& fs);

/// Size of one program's sink-relevant code at the three granularities, in
/// pseudo tokens. Trace-gadget and code-gadget sizes are medians over the
/// extracted gadgets and the per-site slices respectively.
struct ProgramStats {
    std::string program;
    double tg_tokens = 0.0;
    double cg_tokens = 0.0;
    double fn_tokens = 0.0;
    int gadget_count = 0;
    int site_count = 0;

    double reduction() const; // 1 - tg/cg; 0 when cg is 0
};

ProgramStats program_stats(const std::string& name, const Program& p, const TaintConfig& cfg);

struct AggregateStats {
    std::vector<ProgramStats> programs;
    double median_reduction = 0.0; // median over programs of reduction()
};

AggregateStats aggregate_stats(std::vector<ProgramStats> programs);

double median(std::vector<double> values); // mean of the middle two when even

} // namespace tg
