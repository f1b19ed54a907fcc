#pragma once

#include "tg/emulator.hpp"
#include "tg/gasm.hpp"

#include <string>
#include <vector>

namespace tg {

/// A sliced trace rebuilt as a standalone program: one method TG.TG/N whose
/// linear body replays the kept steps, plus copies of every class that body
/// still references (extern declarations as-is; bodied classes without their
/// static initialisers, whose effects were inlined into the replay).
struct Gadget {
    std::string endpoint_key;
    SinkSite site;
    std::string path_id;
    std::string gasm_text;
    Program program;        // gasm_text parsed back
    std::vector<int> kept;  // surviving step indices of the source trace
    MethodId entry;         // the TG method inside `program`
};

/// Rebuilds the kept steps of `t` as a gadget. Guards come back as forward
/// jumps, taken loops as a rotated loop that re-tests for real, calls into
/// emulated bodies as stores to the callee's renumbered parameter slots, and
/// values nobody consumes are popped where they die.
Gadget assemble_gadget(const Program& original, const Trace& t,
                       const std::vector<int>& kept);

} // namespace tg
