#include "tg/taint.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

namespace tg {

namespace {

/// Dataflow state at one program point: one taint bit per local slot and per
/// operand stack entry.
struct State {
    std::vector<char> locals;
    std::vector<char> stack;
};

/// Pointwise OR of `from` into `into`. Returns true when `into` grew.
bool join(State& into, const State& from) {
    if (into.stack.size() != from.stack.size())
        throw std::runtime_error("taint analysis: inconsistent stack depth at join");
    if (from.locals.size() > into.locals.size()) into.locals.resize(from.locals.size(), 0);
    bool changed = false;
    for (size_t i = 0; i < from.locals.size(); ++i)
        if (from.locals[i] && !into.locals[i]) into.locals[i] = 1, changed = true;
    for (size_t i = 0; i < from.stack.size(); ++i)
        if (from.stack[i] && !into.stack[i]) into.stack[i] = 1, changed = true;
    return changed;
}

struct Analyzer {
    const Program& p;
    const TaintConfig& cfg;

    std::map<std::string, char> globals;   // field / static key -> taint bit
    std::map<std::string, char> summaries; // method key + arg bits -> return taint
    std::set<std::string> open;            // summaries currently being computed
    bool hit = false;                      // a sink saw taint at its monitored position
    bool rerun = false;                    // a stale summary was used; iterate again

    bool is_subtype(const std::string& cls, const std::string& wanted) const {
        if (cls == wanted) return true;
        const ClassDef* c = p.find_class(cls);
        if (!c) return false;
        for (const auto& i : c->interfaces)
            if (is_subtype(i, wanted)) return true;
        if (c->superclass) return is_subtype(*c->superclass, wanted);
        return false;
    }

    char global(const std::string& key) const {
        auto it = globals.find(key);
        return it == globals.end() ? 0 : it->second;
    }

    void store_global(const std::string& key, char v) {
        char& slot = globals[key];
        if (v && !slot) slot = 1, rerun = true; // earlier reads may have missed it
    }

    /// Effect of one invoke: taint of the pushed result, or nullopt when the
    /// callee returns nothing. Bodied callees are analyzed recursively.
    std::optional<char> call(const Instruction& ins, const std::vector<char>& args) {
        std::string defining;
        const MethodDef* target = p.resolve_method(ins.mref, &defining);
        std::string key =
            target ? MethodId{defining, ins.mref.name, ins.mref.arity}.key() : ins.mref.key();
        TaintConfig::Role role = cfg.role_of(key);
        if (role == TaintConfig::Role::Unknown && key != ins.mref.key()) {
            role = cfg.role_of(ins.mref.key());
            if (role != TaintConfig::Role::Unknown) key = ins.mref.key();
        }

        if (target && !target->is_extern) {
            char r = analyze(key, *target, args);
            if (target->returns_value()) return r;
            return std::nullopt;
        }
        switch (role) {
            case TaintConfig::Role::Source: return 1;
            case TaintConfig::Role::Sanitizer: return 0;
            case TaintConfig::Role::Sink: {
                int pos = cfg.sinks.at(key);
                if (pos >= 0 && pos < static_cast<int>(args.size()) && args[pos]) hit = true;
                return std::nullopt;
            }
            case TaintConfig::Role::Extern:
                switch (cfg.externs.at(key)) {
                    case ExternKind::Identity: return args.empty() ? char(0) : args[0];
                    case ExternKind::Concat: {
                        char v = 0;
                        for (char a : args) v |= a;
                        return v;
                    }
                    case ExternKind::OracleInput: return 0;
                    case ExternKind::Void: return std::nullopt;
                }
                return std::nullopt;
            case TaintConfig::Role::Unknown: {
                // Extern declaration without configured semantics: analyze
                // every bodied implementation at or below the declared class.
                char r = 0;
                bool returns = false, found = false;
                for (const auto& [cn, cd] : p.classes) {
                    if (cd.is_extern) continue;
                    const MethodDef* m = cd.find_method(ins.mref.name, ins.mref.arity);
                    if (m && !m->is_extern && is_subtype(cn, ins.mref.cls)) {
                        r |= analyze(MethodId{cn, ins.mref.name, ins.mref.arity}.key(), *m, args);
                        returns = returns || m->returns_value();
                        found = true;
                    }
                }
                if (found && returns) return r;
                return std::nullopt; // no implementation: treat as a silent void call
            }
        }
        return std::nullopt;
    }

    /// All-path worklist dataflow over one method body. `args` seeds the
    /// parameter slots; the result is the OR over every return.val operand.
    char analyze(const std::string& key, const MethodDef& def, const std::vector<char>& args) {
        std::string memo = key + "|";
        for (char a : args) memo += a ? '1' : '0';
        if (open.count(memo)) {
            auto it = summaries.find(memo);
            return it == summaries.end() ? 0 : it->second; // optimistic; rerun fixes it
        }
        if (auto it = summaries.find(memo); it != summaries.end()) return it->second;
        open.insert(memo);

        State entry;
        entry.locals = args;
        std::map<int, State> at;
        std::deque<int> work;
        at[0] = entry;
        work.push_back(0);
        char ret = 0;

        auto flow = [&](int pc, const State& s) {
            auto [it, inserted] = at.emplace(pc, s);
            if (inserted || join(it->second, s)) work.push_back(pc);
        };

        while (!work.empty()) {
            int pc = work.front();
            work.pop_front();
            if (pc < 0 || pc >= static_cast<int>(def.body.size()))
                throw std::runtime_error("taint analysis: jump out of range");
            State s = at[pc];
            const Instruction& ins = def.body[pc];

            auto pop1 = [&]() {
                if (s.stack.empty()) throw std::runtime_error("taint analysis: stack underflow");
                char v = s.stack.back();
                s.stack.pop_back();
                return v;
            };
            auto set_local = [&](int slot, char v) {
                if (slot >= static_cast<int>(s.locals.size())) s.locals.resize(slot + 1, 0);
                s.locals[slot] = v;
            };

            bool fall = true;
            switch (ins.op) {
                case Op::ConstInt:
                case Op::ConstStr:
                case Op::ConstNull: s.stack.push_back(0); break;
                case Op::Load:
                    s.stack.push_back(ins.slot < static_cast<int>(s.locals.size())
                                          ? s.locals[ins.slot]
                                          : 0);
                    break;
                case Op::Store: set_local(ins.slot, pop1()); break;
                case Op::Add:
                case Op::Sub:
                case Op::Mul:
                case Op::Concat:
                case Op::CmpEq:
                case Op::CmpNe:
                case Op::CmpLt: {
                    char b = pop1(), a = pop1();
                    s.stack.push_back(a | b);
                    break;
                }
                case Op::Dup: {
                    char v = pop1();
                    s.stack.push_back(v);
                    s.stack.push_back(v);
                    break;
                }
                case Op::Pop: pop1(); break;
                case Op::Swap: {
                    char b = pop1(), a = pop1();
                    s.stack.push_back(b);
                    s.stack.push_back(a);
                    break;
                }
                case Op::New: s.stack.push_back(0); break;
                case Op::GetField:
                    pop1();
                    s.stack.push_back(global(ins.fref.key()));
                    break;
                case Op::PutField: {
                    char v = pop1();
                    pop1();
                    store_global(ins.fref.key(), v);
                    break;
                }
                case Op::GetStatic: s.stack.push_back(global(ins.fref.key())); break;
                case Op::PutStatic: store_global(ins.fref.key(), pop1()); break;
                case Op::InvokeStatic:
                case Op::InvokeVirtual:
                case Op::InvokeInterface: {
                    std::vector<char> cargs(ins.mref.arity);
                    for (int i = ins.mref.arity - 1; i >= 0; --i) cargs[i] = pop1();
                    if (auto r = call(ins, cargs)) s.stack.push_back(*r);
                    break;
                }
                case Op::Ifz:
                    pop1();
                    flow(ins.target, s);
                    break;
                case Op::Goto:
                    flow(ins.target, s);
                    fall = false;
                    break;
                case Op::Return: fall = false; break;
                case Op::ReturnVal:
                    ret |= pop1();
                    fall = false;
                    break;
                case Op::Throw:
                    pop1();
                    fall = false;
                    break;
            }
            if (fall && pc + 1 < static_cast<int>(def.body.size())) flow(pc + 1, s);
        }

        open.erase(memo);
        char& slot = summaries[memo];
        if (ret && !slot) slot = 1, rerun = true; // recursive callers saw the old value
        else slot = ret;
        return ret;
    }
};

} // namespace

double gadget_taint_score(const Gadget& g, const TaintConfig& cfg) {
    const ClassDef* tg = g.program.find_class(g.entry.cls);
    if (!tg) throw std::runtime_error("gadget program lacks its entry class " + g.entry.cls);
    const MethodDef* def = tg->find_method(g.entry.name, g.entry.arity);
    if (!def) throw std::runtime_error("gadget program lacks its entry method " + g.entry.key());

    Analyzer a{g.program, cfg};
    std::vector<char> args(static_cast<size_t>(def->arity), 0);
    // Globals and summaries are monotone, so iterating to a fixpoint makes
    // the result order-independent (a store reached after a load on the
    // first sweep is seen by the load on the next).
    do {
        a.rerun = false;
        auto before = a.summaries;
        a.summaries.clear();
        for (const auto& [k, v] : before)
            if (v) a.summaries[k] = v; // keep only positive facts; recompute the rest
        a.analyze(g.entry.key(), *def, args);
    } while (a.rerun);
    return a.hit ? 1.0 : 0.0;
}

std::vector<EndpointScore> classify_program(const Program& p, const TaintConfig& cfg,
                                            const PipelineOptions& opt) {
    PipelineResult pr = run_pipeline(p, cfg, opt);
    std::vector<EndpointScore> out;
    for (const EndpointResult& er : pr.endpoints) {
        EndpointScore s;
        s.endpoint = er.endpoint;
        s.gadgets = static_cast<int>(er.gadgets.size());
        for (const Gadget& g : er.gadgets)
            s.score = std::max(s.score, gadget_taint_score(g, cfg));
        out.push_back(std::move(s));
    }
    return out;
}

double Metrics::tpr() const { return tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn); }

double Metrics::fpr() const { return fp + tn == 0 ? 0.0 : double(fp) / double(fp + tn); }

Metrics evaluate(const std::vector<Sample>& samples, double threshold) {
    Metrics m;
    for (const Sample& s : samples) {
        bool flagged = s.score >= threshold;
        if (s.label)
            flagged ? ++m.tp : ++m.fn;
        else
            flagged ? ++m.fp : ++m.tn;
    }
    return m;
}

} // namespace tg
