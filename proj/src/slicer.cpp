#include "tg/slicer.hpp"

#include <algorithm>

namespace tg {

namespace {

// Instructions whose only effect is pushing a value; safe to drop when no
// kept step consumes that value.
bool is_pure_producer(Op op) {
  switch (op) {
    case Op::ConstInt:
    case Op::ConstStr:
    case Op::ConstNull:
    case Op::Load:
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Concat:
    case Op::CmpEq:
    case Op::CmpNe:
    case Op::CmpLt:
    case Op::Dup:
    case Op::Swap:
    case Op::GetField:
    case Op::GetStatic:
    case Op::New:
    case Op::ReturnVal:
      return true;
    default:
      return false;
  }
}

bool is_invoke(Op op) {
  return op == Op::InvokeStatic || op == Op::InvokeVirtual ||
         op == Op::InvokeInterface;
}

} // namespace

std::vector<int> slice_trace(const Trace& t) {
  const int n = static_cast<int>(t.steps.size());
  std::vector<char> keep(n, 0);
  std::vector<char> seed(n, 0);
  std::vector<char> in_loop(n, 0); // member of a kept taken-loop region

  // Seeds: the trace's sink plus every earlier sink call at the same site.
  // The differential check compares per-site call sequences, so the gadget
  // must replay all calls that site made before the final one too.
  for (int i = 0; i < n && i <= t.sink_step; ++i) {
    const TraceStep& s = t.steps[i];
    if (i == t.sink_step ||
        (s.is_sink && s.method.key() == t.site.method_key &&
         s.instr_index == t.site.instr_index)) {
      keep[i] = 1;
      seed[i] = 1;
    }
  }

  auto mark = [&](int i, bool& changed) {
    if (i >= 0 && i < n && !keep[i]) {
      keep[i] = 1;
      changed = true;
    }
  };

  bool changed = true;
  while (changed) {
    changed = false;

    for (int i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      for (int d : t.steps[i].deps) mark(d, changed);
      // A step inside an inlined call needs the call itself.
      mark(t.steps[i].invoke_step, changed);
    }

    // Guards: an ifz survives when its region contains a kept step. A taken
    // loop region is kept whole — the gadget re-runs the loop concretely, so
    // partial bodies would change its semantics. Forced notes describe arms
    // that were unconditional on this path and never govern.
    for (const BranchNote& bn : t.notes) {
      if (bn.forced) continue;
      bool region_kept = keep[bn.ifz_step] != 0;
      for (int i = bn.open_step; i < bn.close_step && i < n && !region_kept;
           ++i)
        region_kept = keep[i] != 0;
      if (!region_kept) continue;
      mark(bn.ifz_step, changed);
      if (bn.shape == BranchShape::BackEdge && bn.taken) {
        for (int i = bn.open_step; i < bn.close_step && i < n; ++i) {
          mark(i, changed);
          in_loop[i] = 1;
        }
      }
    }
  }

  // Sweep: drop kept steps whose effects no kept step observes — stores
  // nothing loads, value producers nothing consumes, calls whose inlined
  // body vanished, and guards whose region emptied out. Loop regions and
  // seeds are exempt. Runs to a fixpoint since each removal can orphan
  // another step.
  bool swept = true;
  while (swept) {
    swept = false;

    std::vector<char> used(n, 0);
    std::vector<char> owns_kept(n, 0);
    for (int i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      for (int d : t.steps[i].deps)
        if (d >= 0 && d < n) used[d] = 1;
      const int inv = t.steps[i].invoke_step;
      if (inv >= 0 && inv < n) owns_kept[inv] = 1;
    }

    for (int i = 0; i < n; ++i) {
      if (!keep[i] || seed[i] || in_loop[i] || used[i]) continue;
      const Op op = t.steps[i].ins.op;
      if (op == Op::Store || is_pure_producer(op) ||
          (is_invoke(op) && !owns_kept[i])) {
        keep[i] = 0;
        swept = true;
      }
    }

    for (const BranchNote& bn : t.notes) {
      if (bn.forced || !keep[bn.ifz_step]) continue;
      if (bn.shape == BranchShape::BackEdge && bn.taken) continue;
      bool region_kept = false;
      for (int i = bn.open_step; i < bn.close_step && i < n && !region_kept;
           ++i)
        region_kept = keep[i] != 0;
      if (!region_kept) {
        keep[bn.ifz_step] = 0;
        swept = true;
      }
    }
  }

  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (keep[i]) out.push_back(i);
  return out;
}

} // namespace tg
