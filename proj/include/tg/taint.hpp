#pragma once

#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/pipeline.hpp"

namespace tg {

/// All-path taint score for one extracted gadget. The analysis runs a
/// forward dataflow over the gadget bytecode: source calls introduce taint,
/// sanitizer calls remove it, concat-like operations propagate it, and
/// stores through fields or statics are tracked per field name. The score is
/// 1.0 when some path lets tainted data reach a sink call at its monitored
/// argument position, 0.0 otherwise.
double gadget_taint_score(const Gadget& g, const TaintConfig& cfg);

/// Verdict for one endpoint: the maximum over its gadget scores. An endpoint
/// with no gadgets scores 0 (nothing sink-relevant survives extraction).
struct EndpointScore {
    MethodId endpoint;
    double score = 0.0;
    int gadgets = 0;
};

/// Runs the extraction pipeline, then scores every endpoint.
std::vector<EndpointScore> classify_program(const Program& p, const TaintConfig& cfg,
                                            const PipelineOptions& opt = {});

/// One labelled endpoint for classifier evaluation.
struct Sample {
    std::string key;
    bool label = false;
    double score = 0.0;
};

struct Metrics {
    int tp = 0, fp = 0, tn = 0, fn = 0;

    double tpr() const; // detected positives / labelled positives; 1.0 when none
    double fpr() const; // false alarms / labelled negatives; 0.0 when none
};

/// Thresholds the scores and tallies the confusion counts.
Metrics evaluate(const std::vector<Sample>& samples, double threshold);

} // namespace tg
