#include "tg/assembler.hpp"

#include <cassert>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tg/parser.hpp"
#include "tg/printer.hpp"

namespace tg {

namespace {

struct EmitLine {
    bool is_label = false;
    std::string label;
    Instruction ins;
};

EmitLine instr_line(Instruction ins) { return {false, "", std::move(ins)}; }
EmitLine label_line(std::string name) { return {true, std::move(name), {}}; }

Instruction make_op(Op op) {
    Instruction i;
    i.op = op;
    return i;
}

Instruction make_jump(Op op, std::string label) {
    Instruction i = make_op(op);
    i.label = std::move(label);
    return i;
}

Instruction make_slot_op(Op op, int slot) {
    Instruction i = make_op(op);
    i.slot = slot;
    return i;
}

int op_pops(const Instruction& ins) {
    switch (ins.op) {
        case Op::ConstInt:
        case Op::ConstStr:
        case Op::ConstNull:
        case Op::Load:
        case Op::GetStatic:
        case Op::New:
        case Op::Dup: // duplicates in place
        case Op::Goto:
        case Op::Return:
            return 0;
        case Op::Store:
        case Op::Pop:
        case Op::Ifz:
        case Op::GetField:
        case Op::PutStatic:
        case Op::Throw:
        case Op::ReturnVal:
            return 1;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Concat:
        case Op::CmpEq:
        case Op::CmpNe:
        case Op::CmpLt:
        case Op::Swap:
        case Op::PutField:
            return 2;
        case Op::InvokeStatic:
        case Op::InvokeVirtual:
        case Op::InvokeInterface:
            return ins.mref.arity;
    }
    return 0;
}

bool droppable_before_pop(Op op) {
    switch (op) {
        case Op::ConstInt:
        case Op::ConstStr:
        case Op::ConstNull:
        case Op::Load:
        case Op::GetStatic:
        case Op::New:
        case Op::Dup:
            return true;
        default:
            return false;
    }
}

// Collects the classes an instruction mentions so that the gadget program
// can declare them.
void collect_refs(const Instruction& ins, std::set<std::string>& out) {
    switch (ins.op) {
        case Op::New:
            out.insert(ins.cls);
            break;
        case Op::GetField:
        case Op::PutField:
        case Op::GetStatic:
        case Op::PutStatic:
            out.insert(ins.fref.cls);
            break;
        case Op::InvokeStatic:
        case Op::InvokeVirtual:
        case Op::InvokeInterface:
            out.insert(ins.mref.cls);
            break;
        default:
            break;
    }
}

} // namespace

Gadget assemble_gadget(const Program& original, const Trace& t,
                       const std::vector<int>& kept) {
    const int n = static_cast<int>(t.steps.size());
    std::vector<char> keep(n, 0);
    for (int i : kept)
        if (i >= 0 && i < n) keep[i] = 1;

    // Locate the endpoint definition (parameter declarations) and the root
    // frame of the trace.
    const MethodDef* endpoint = nullptr;
    std::string endpoint_cls;
    for (const auto& [cname, cls] : original.classes)
        for (const auto& [sig, m] : cls.methods)
            if (MethodId{cname, m.name, m.arity}.key() == t.endpoint_key) {
                endpoint = &m;
                endpoint_cls = cname;
            }
    if (!endpoint)
        throw std::runtime_error("assemble_gadget: endpoint not found: " +
                                 t.endpoint_key);
    uint64_t root_uid = 0;
    bool root_found = false;
    for (const TraceStep& s : t.steps)
        if (!root_found && s.invoke_step < 0 &&
            s.method.key() == t.endpoint_key) {
            root_uid = s.frame_uid;
            root_found = true;
        }

    // Which calls were emulated inline (own at least one kept step), and the
    // callee frame they created.
    std::map<int, uint64_t> inlined_frame;
    for (int j = 0; j < n; ++j) {
        const int inv = t.steps[j].invoke_step;
        if (inv >= 0 && keep[j]) inlined_frame.emplace(inv, t.steps[j].frame_uid);
    }

    // Branch notes by position: the deciding step, and for taken loops also
    // the re-testing conditional jump that sits last in the region.
    std::map<int, const BranchNote*> note_at;
    std::map<int, const BranchNote*> loop_close_at;
    for (const BranchNote& bn : t.notes) {
        note_at[bn.ifz_step] = &bn;
        if (bn.shape == BranchShape::BackEdge && bn.taken &&
            bn.close_step - 1 > bn.ifz_step)
            loop_close_at[bn.close_step - 1] = &bn;
    }

    // Flat local numbering: the root parameters keep their slots, every
    // other (frame, slot) pair gets a fresh one in first-use order.
    std::map<std::pair<uint64_t, int>, int> slot_map;
    int next_slot = endpoint->arity;
    for (int i = 0; i < endpoint->arity; ++i) slot_map[{root_uid, i}] = i;
    auto map_slot = [&](uint64_t uid, int slot) {
        auto [it, inserted] = slot_map.try_emplace({uid, slot}, next_slot);
        if (inserted) ++next_slot;
        return it->second;
    };

    int next_label = 0;
    auto fresh_label = [&] { return "L" + std::to_string(next_label++); };
    std::map<const BranchNote*, std::string> loop_body_label;

    // Replay stack: who pushed each value and whether any kept step will
    // consume it. Values that die unconsumed are popped immediately.
    struct SimVal {
        int producer;
        bool live;
    };
    std::vector<SimVal> sim;
    struct PendingClose {
        int close_step;
        std::string label;
    };
    std::vector<PendingClose> pending;

    std::vector<EmitLine> lines;
    auto emit = [&](Instruction ins) { lines.push_back(instr_line(std::move(ins))); };
    auto push_value = [&](const TraceStep& ts, int step, int ordinal) {
        bool live = false;
        if (ordinal < static_cast<int>(ts.consumed_by.size()))
            for (int c : ts.consumed_by[ordinal])
                if (c >= 0 && c < n && keep[c]) live = true;
        sim.push_back({step, live});
    };
    auto repair = [&] {
        while (!sim.empty() && !sim.back().live) {
            emit(make_op(Op::Pop));
            sim.pop_back();
        }
    };

    for (int i : kept) {
        const TraceStep& ts = t.steps[i];

        while (!pending.empty() && pending.back().close_step <= i) {
            lines.push_back(label_line(pending.back().label));
            pending.pop_back();
        }

        if (auto lc = loop_close_at.find(i);
            lc != loop_close_at.end() && ts.ins.op == Op::Ifz) {
            // Second test of a taken loop: jump back to the body label.
            emit(make_jump(Op::Ifz, loop_body_label.at(lc->second)));
            sim.pop_back();
            repair();
            continue;
        }

        switch (ts.ins.op) {
            case Op::Goto:
            case Op::Return:
                break; // control is re-established by the emitted shapes

            case Op::ReturnVal:
                // The value simply stays on the replay stack for the caller.
                sim.pop_back();
                push_value(ts, i, 0);
                break;

            case Op::Ifz: {
                auto it = note_at.find(i);
                if (it == note_at.end())
                    throw std::runtime_error(
                        "assemble_gadget: conditional jump without a note");
                const BranchNote* bn = it->second;
                if (bn->shape == BranchShape::BackEdge && bn->taken) {
                    std::string lb = fresh_label();
                    std::string lx = fresh_label();
                    emit(make_jump(Op::Ifz, lb));
                    emit(make_jump(Op::Goto, lx));
                    lines.push_back(label_line(lb));
                    loop_body_label[bn] = lb;
                    pending.push_back({bn->close_step, lx});
                } else if (bn->shape == BranchShape::BackEdge) {
                    // Skipped loop inside a kept region: test and fall on.
                    std::string lc = fresh_label();
                    emit(make_jump(Op::Ifz, lc));
                    lines.push_back(label_line(lc));
                } else if (bn->taken) {
                    std::string lb = fresh_label();
                    std::string lc = fresh_label();
                    emit(make_jump(Op::Ifz, lb));
                    emit(make_jump(Op::Goto, lc));
                    lines.push_back(label_line(lb));
                    pending.push_back({bn->close_step, lc});
                } else {
                    std::string lc = fresh_label();
                    emit(make_jump(Op::Ifz, lc));
                    pending.push_back({bn->close_step, lc});
                }
                sim.pop_back();
                break;
            }

            case Op::Load:
                emit(make_slot_op(Op::Load, map_slot(ts.frame_uid, ts.ins.slot)));
                push_value(ts, i, 0);
                break;

            case Op::Store:
                emit(make_slot_op(Op::Store, map_slot(ts.frame_uid, ts.ins.slot)));
                sim.pop_back();
                break;

            case Op::InvokeStatic:
            case Op::InvokeVirtual:
            case Op::InvokeInterface: {
                auto fr = inlined_frame.find(i);
                if (fr != inlined_frame.end()) {
                    // Inlined call: store the arguments that made it into the
                    // replay into the callee's renumbered parameter slots.
                    for (int a = ts.ins.mref.arity - 1; a >= 0; --a) {
                        bool present =
                            a < static_cast<int>(ts.arg_producers.size()) &&
                            !ts.arg_producers[a].empty();
                        if (present)
                            for (int p : ts.arg_producers[a])
                                if (!(p >= 0 && p < n && keep[p])) present = false;
                        if (!present) continue;
                        emit(make_slot_op(Op::Store, map_slot(fr->second, a)));
                        sim.pop_back();
                    }
                } else {
                    emit(ts.ins);
                    for (int k = 0; k < ts.ins.mref.arity; ++k) sim.pop_back();
                    for (int v = 0; v < static_cast<int>(ts.consumed_by.size()); ++v)
                        push_value(ts, i, v);
                }
                break;
            }

            default: {
                emit(ts.ins);
                for (int k = 0; k < op_pops(ts.ins); ++k) sim.pop_back();
                for (int v = 0; v < static_cast<int>(ts.consumed_by.size()); ++v)
                    push_value(ts, i, v);
                break;
            }
        }
        repair();
    }

    while (!pending.empty()) {
        lines.push_back(label_line(pending.back().label));
        pending.pop_back();
    }
    if (!sim.empty())
        throw std::runtime_error("assemble_gadget: unbalanced replay stack");

    // Peephole: a store whose slot is never loaded is just a pop, and a
    // producer feeding a pop directly can vanish with it.
    bool changed = true;
    while (changed) {
        changed = false;
        std::set<int> loaded;
        for (const EmitLine& l : lines)
            if (!l.is_label && l.ins.op == Op::Load) loaded.insert(l.ins.slot);
        for (EmitLine& l : lines)
            if (!l.is_label && l.ins.op == Op::Store && !loaded.count(l.ins.slot)) {
                l.ins = make_op(Op::Pop);
                changed = true;
            }
        for (size_t i = 0; i + 1 < lines.size(); ++i) {
            if (lines[i].is_label || lines[i + 1].is_label) continue;
            if (droppable_before_pop(lines[i].ins.op) &&
                lines[i + 1].ins.op == Op::Pop) {
                lines.erase(lines.begin() + i, lines.begin() + i + 2);
                changed = true;
                break;
            }
        }
    }

    // Gadget text: the TG class first, then copies of everything referenced.
    std::string tg_name = "TG";
    while (original.classes.count(tg_name)) tg_name += "_";

    std::set<std::string> needed;
    for (const auto& [slot, cls] : endpoint->param_classes) needed.insert(cls);
    for (const EmitLine& l : lines)
        if (!l.is_label) collect_refs(l.ins, needed);

    // Transitive closure over superclasses, interfaces and anything the
    // copied bodies mention (out-of-scope calls run those bodies for real).
    std::vector<std::string> work(needed.begin(), needed.end());
    std::set<std::string> copied;
    while (!work.empty()) {
        std::string name = work.back();
        work.pop_back();
        if (copied.count(name)) continue;
        copied.insert(name);
        const ClassDef* cd = original.find_class(name);
        if (!cd)
            throw std::runtime_error("assemble_gadget: unknown class " + name);
        std::set<std::string> more;
        if (cd->superclass) more.insert(*cd->superclass);
        for (const std::string& itf : cd->interfaces) more.insert(itf);
        for (const auto& [sig, m] : cd->methods) {
            if (m.is_clinit()) continue; // stripped from the copy below
            for (const Instruction& ins : m.body) collect_refs(ins, more);
            for (const auto& [slot, cls] : m.param_classes) more.insert(cls);
        }
        for (const std::string& m : more)
            if (!copied.count(m)) work.push_back(m);
    }

    Program deps;
    for (const std::string& name : copied) {
        ClassDef copy = *original.find_class(name);
        // The initialiser's effects were inlined into the replay; running it
        // again on first static access would duplicate them.
        copy.methods.erase({"<clinit>", 0});
        deps.classes.emplace(name, std::move(copy));
    }

    std::string text;
    text += "class " + tg_name + "\n";
    text += "  method static " + tg_name + "/" +
            std::to_string(endpoint->arity) + "\n";
    for (const auto& [slot, cls] : endpoint->param_classes)
        text += "    param " + std::to_string(slot) + " : " + cls + "\n";
    for (const EmitLine& l : lines) {
        if (l.is_label)
            text += "  " + l.label + ":\n";
        else
            text += "    " + render_instruction(l.ins) + "\n";
    }
    text += "    return\n";
    text += "  end\n";
    text += "end\n";
    if (!deps.classes.empty()) {
        text += "\n";
        text += render_gasm(deps);
    }

    Gadget g;
    g.endpoint_key = t.endpoint_key;
    g.site = t.site;
    g.path_id = t.path_id;
    g.gasm_text = text;
    g.program = parse_program(text);
    g.kept = kept;
    g.entry = {tg_name, tg_name, endpoint->arity};
    return g;
}

} // namespace tg
