#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/gasm.hpp"
#include "tg/hierarchy.hpp"

namespace tg {

/// Value tracked by the static emulator. Constants are carried precisely so
/// that guards on them can be decided; everything else is opaque.
struct SymValue {
    enum class Kind { Null, Int, Str, Obj, Opaque };
    Kind kind = Kind::Opaque;
    int64_t int_val = 0;
    std::string str_val;
    int obj_id = -1;     // identity of emulator-allocated objects
    std::string obj_cls; // dynamic class of Obj values

    static SymValue make_null() { return {Kind::Null, 0, "", -1, ""}; }
    static SymValue make_int(int64_t v) { return {Kind::Int, v, "", -1, ""}; }
    static SymValue make_str(std::string s) { return {Kind::Str, 0, std::move(s), -1, ""}; }
    static SymValue make_obj(int id, std::string cls) {
        return {Kind::Obj, 0, "", id, std::move(cls)};
    }
    static SymValue make_opaque() { return {}; }

    bool is_const() const { return kind != Kind::Opaque; }
    /// ifz takes the jump on int 0 and on null; objects and strings are
    /// never zero. nullopt when the value is opaque.
    std::optional<bool> is_zero() const {
        switch (kind) {
            case Kind::Null: return true;
            case Kind::Int: return int_val == 0;
            case Kind::Str:
            case Kind::Obj: return false;
            case Kind::Opaque: return std::nullopt;
        }
        return std::nullopt;
    }
    bool operator==(const SymValue&) const = default;
};

/// Static shape of one ifz site within a method body.
enum class BranchShape { TwoSided, OneSided, BackEdge };

struct BranchInfo {
    BranchShape shape = BranchShape::OneSided;
    /// pc where the arms rejoin: the terminating goto's target for two-sided
    /// sites, the ifz target for one-sided ones, body.size() when the
    /// fall-through arm ends in return/return.val/throw, and the
    /// fall-through pc for back edges.
    int close_pc = 0;
};

/// Classifies the ifz at `pc`: a backward target is a loop back edge; a
/// forward target whose fall-through block ends by jumping past the target
/// (or leaving the method) separates two arms; anything else guards a
/// one-sided region.
BranchInfo classify_branch(const MethodDef& m, int pc);

/// One executed instruction on a traced path.
struct TraceStep {
    MethodId method;
    int instr_index = 0;
    Instruction ins;
    uint64_t frame_uid = 0;
    int invoke_step = -1; // step that created this frame; -1 in the root frame
    /// Producer steps whose values this step consumed. Empty for calls into
    /// emulated bodies: their arguments are reached through the callee's
    /// loads instead.
    std::vector<int> deps;
    /// For every value this step pushed, in push order: the steps that later
    /// popped it (unkept consumers matter for stack repair). Filled in by the
    /// emulator as consumers execute.
    std::vector<std::vector<int>> consumed_by;
    /// For invoke steps: producer steps of each argument, bottom-most first.
    std::vector<std::vector<int>> arg_producers;
    bool is_source = false;
    bool is_sink = false;

    bool operator==(const TraceStep&) const = default;
};

/// One ifz decision taken on a traced path. Governed steps live in
/// [open_step, close_step).
struct BranchNote {
    int ifz_step = -1;
    int open_step = -1;
    int close_step = -1;
    BranchShape shape = BranchShape::TwoSided;
    bool taken = false;  // jump taken on this path
    bool forced = false; // decided by a constant condition (no fork)

    bool operator==(const BranchNote&) const = default;
};

struct SinkSite {
    std::string method_key;
    int instr_index = 0;

    bool operator==(const SinkSite&) const = default;
    auto operator<=>(const SinkSite&) const = default;
};

/// A single sink-terminated path: the step sequence up to and including the
/// sink call, plus the branch decisions that shaped it.
struct Trace {
    std::string endpoint_key;
    std::vector<TraceStep> steps;
    std::vector<BranchNote> notes;
    int sink_step = -1;
    SinkSite site;
    std::vector<int> source_steps;
    /// One character per genuine fork: '0' fall-through, '1' taken. Orders
    /// traces canonically regardless of worklist policy.
    std::string path_id;

    bool operator==(const Trace&) const = default;
};

enum class EndpointStatus { Ok, Timeout, Throw, Error };

const char* endpoint_status_name(EndpointStatus s);

struct EmuLimits {
    double time_budget_secs = 300.0;
    int64_t max_instructions = 100000;
    int max_states = 4096;
};

/// Worklist discipline; the emitted trace set is policy-independent.
enum class ForkPolicy { Fifo, Lifo };

struct EmuResult {
    EndpointStatus status = EndpointStatus::Ok;
    std::vector<Trace> traces; // sorted by (site, path_id)
    int64_t executed_instructions = 0;
    int peak_states = 0;
    std::vector<std::string> messages;
};

/// Forks a path state per reachable arm of every data-dependent branch and
/// records, per path, every executed instruction with full producer/consumer
/// links. Emits one trace per sink call preceded by a source call on the
/// same path. Calls to bodied in-scope methods are followed; everything
/// else acts through its configured extern semantics.
EmuResult emulate_endpoint(const Program& p, const TaintConfig& cfg, const MethodId& endpoint,
                           const Scope& scope, const EmuLimits& limits = {},
                           ForkPolicy policy = ForkPolicy::Fifo);

} // namespace tg
