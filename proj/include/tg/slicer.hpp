#pragma once

#include "tg/emulator.hpp"

#include <vector>

namespace tg {

// Backward slice over a single recorded trace.
//
// Returns the ascending indices of the steps that must survive into the
// gadget: the sink call (plus any earlier sink calls at the same site, so
// the gadget reproduces the full call sequence observed there), everything
// they transitively depend on, the guards whose regions contain kept steps,
// taken loop regions in full (the gadget re-runs the loop for real), and the
// calls that own kept inlined steps. A final sweep removes stores nothing
// reads and value producers nothing consumes.
std::vector<int> slice_trace(const Trace& t);

} // namespace tg
