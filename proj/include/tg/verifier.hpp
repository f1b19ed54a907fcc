#pragma once

#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/gasm.hpp"

namespace tg {

struct VerifyIssue {
    std::string method; // full key, or class name for class-level issues
    int index = -1;     // instruction index, -1 when not applicable
    std::string message;
};

struct VerifyReport {
    std::vector<VerifyIssue> errors;
    std::vector<VerifyIssue> warnings;
    std::vector<VerifyIssue> unsupported; // parsed but unsupported constructs (throw)

    bool ok() const { return errors.empty(); }
    std::string summary() const;
};

/// Abstract stack-depth verification over all paths of every method body:
/// consistent depth at every join, no underflow, depth 0 at return and 1 at
/// return.val, no control flow falling off the end. Extern call effects are
/// taken from the config; extern methods without configured semantics are
/// assumed void and reported as warnings. `throw` verifies but is flagged
/// unsupported.
VerifyReport verify_program(const Program& p, const TaintConfig& cfg = {});

} // namespace tg
