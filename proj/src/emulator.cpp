#include "tg/emulator.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <deque>
#include <map>
#include <set>
#include <utility>

namespace tg {

const char* endpoint_status_name(EndpointStatus s) {
    switch (s) {
        case EndpointStatus::Ok: return "ok";
        case EndpointStatus::Timeout: return "timeout";
        case EndpointStatus::Throw: return "throw";
        case EndpointStatus::Error: return "error";
    }
    return "?";
}

BranchInfo classify_branch(const MethodDef& m, int pc) {
    const Instruction& ins = m.body.at(pc);
    if (ins.target <= pc) return {BranchShape::BackEdge, pc + 1};
    const Instruction& tail = m.body.at(ins.target - 1);
    if (tail.op == Op::Return || tail.op == Op::ReturnVal || tail.op == Op::Throw)
        return {BranchShape::TwoSided, static_cast<int>(m.body.size())};
    if (tail.op == Op::Goto && tail.target >= ins.target)
        return {BranchShape::TwoSided, tail.target};
    return {BranchShape::OneSided, ins.target};
}

namespace {

struct Cell {
    SymValue v;
    std::vector<std::pair<int, int>> origin; // (producer step, push ordinal)
};

struct Slot {
    SymValue v;
    std::vector<int> writers;
};

struct OpenRegion {
    int ifz_step = -1;
    int open_step = -1;
    BranchShape shape = BranchShape::OneSided;
    int close_pc = INT_MAX;
    bool taken = false;
    bool forced = false;
    bool join_on_close = false;
    std::pair<uint64_t, int> backedge_key{0, -1};
    // pre-region snapshot for joins
    std::map<int, Slot> pre_locals;
    std::vector<Cell> pre_stack;
    std::map<std::string, Slot> pre_statics;
    std::map<int, std::map<std::string, Slot>> pre_heap;
};

struct Frame {
    MethodId method;
    const MethodDef* def = nullptr;
    int pc = 0;
    uint64_t uid = 0;
    int invoke_step = -1;
    std::map<int, Slot> locals;
    std::vector<Cell> stack;
    std::vector<OpenRegion> regions;
};

struct SinkRec {
    int step = -1;
    SinkSite site;
};

struct State {
    std::vector<Frame> frames;
    std::map<std::string, Slot> statics;
    std::map<int, std::map<std::string, Slot>> heap;
    std::map<std::string, std::vector<int>> opaque_field_writes;
    std::set<std::string> initialized;
    std::set<std::pair<uint64_t, int>> back_forced;
    std::vector<TraceStep> steps;
    std::vector<BranchNote> notes;
    std::vector<SinkRec> sinks;
    std::vector<int> sources;
    std::string path_id;
    uint64_t next_uid = 1;
    int next_obj = 0;
};

enum class StepOutcome { Continue, Forked, Done };
enum class PathEnd { Returned, Thrown, Errored, RecursionCut };

std::vector<int> origin_steps(const Cell& c) {
    std::vector<int> out;
    for (const auto& [s, o] : c.origin) out.push_back(s);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void add_deps(std::vector<int>& deps, const std::vector<int>& more) {
    deps.insert(deps.end(), more.begin(), more.end());
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
}

bool stringable(const SymValue& v) {
    return v.kind == SymValue::Kind::Str || v.kind == SymValue::Kind::Int ||
           v.kind == SymValue::Kind::Null;
}

std::string stringify(const SymValue& v) {
    switch (v.kind) {
        case SymValue::Kind::Str: return v.str_val;
        case SymValue::Kind::Int: return std::to_string(v.int_val);
        case SymValue::Kind::Null: return "null";
        default: return "";
    }
}

class Engine {
public:
    Engine(const Program& p, const TaintConfig& cfg, const MethodId& endpoint,
           const Scope& scope, const EmuLimits& lim, ForkPolicy policy)
        : p_(p), cfg_(cfg), endpoint_(endpoint), scope_(scope), lim_(lim), policy_(policy),
          hier_(p) {}

    EmuResult run() {
        auto t0 = std::chrono::steady_clock::now();
        const ClassDef* cls = p_.find_class(endpoint_.cls);
        const MethodDef* def = cls ? cls->find_method(endpoint_.name, endpoint_.arity) : nullptr;
        if (!def || def->is_extern) {
            res_.status = EndpointStatus::Error;
            res_.messages.push_back("unknown endpoint " + endpoint_.key());
            return res_;
        }

        State init;
        Frame root;
        root.method = endpoint_;
        root.def = def;
        root.uid = 0;
        for (int i = 0; i < def->arity; ++i) init_param(root, i);
        init.frames.push_back(std::move(root));

        std::deque<State> work;
        work.push_back(std::move(init));
        bool stopped = false;
        while (!work.empty()) {
            res_.peak_states = std::max(res_.peak_states, static_cast<int>(work.size()));
            State st = std::move(work.front());
            work.pop_front();
            for (;;) {
                if (res_.executed_instructions >= lim_.max_instructions) {
                    note_timeout("instruction budget exhausted");
                    stopped = true;
                    break;
                }
                if ((res_.executed_instructions & 1023) == 0) {
                    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
                    if (dt.count() > lim_.time_budget_secs) {
                        note_timeout("time budget exhausted");
                        stopped = true;
                        break;
                    }
                }
                StepOutcome out = step(st, work);
                if (out == StepOutcome::Continue) continue;
                if (out == StepOutcome::Forked &&
                    static_cast<int>(work.size()) + 1 > lim_.max_states) {
                    note_timeout("state budget exhausted");
                    stopped = true;
                }
                break;
            }
            if (stopped) break;
        }

        if (timeout_)
            res_.status = EndpointStatus::Timeout;
        else if (threw_)
            res_.status = EndpointStatus::Throw;
        else if (errored_)
            res_.status = EndpointStatus::Error;
        else
            res_.status = EndpointStatus::Ok;

        std::sort(res_.traces.begin(), res_.traces.end(), [](const Trace& a, const Trace& b) {
            if (a.site != b.site) return a.site < b.site;
            if (a.path_id != b.path_id) return a.path_id < b.path_id;
            return a.sink_step < b.sink_step;
        });
        return res_;
    }

private:
    const Program& p_;
    const TaintConfig& cfg_;
    MethodId endpoint_;
    const Scope& scope_;
    EmuLimits lim_;
    ForkPolicy policy_;
    ClassHierarchy hier_;
    EmuResult res_;
    bool timeout_ = false, threw_ = false, errored_ = false;

    void message(const std::string& m) {
        if (res_.messages.size() < 64) res_.messages.push_back(m);
    }
    void note_timeout(const std::string& m) {
        timeout_ = true;
        message(m);
    }

    static void init_param(Frame& fr, int slot) {
        fr.locals[slot] = Slot{SymValue::make_opaque(), {}};
    }

    // ---- stack plumbing -------------------------------------------------

    bool pop_cell(State& st, Cell& out, int consumer) {
        Frame& fr = st.frames.back();
        if (fr.stack.empty()) return false;
        out = std::move(fr.stack.back());
        fr.stack.pop_back();
        for (const auto& [ps, ord] : out.origin)
            st.steps[ps].consumed_by[ord].push_back(consumer);
        return true;
    }

    void push_cell(State& st, int producer, SymValue v) {
        int ord = static_cast<int>(st.steps[producer].consumed_by.size());
        st.steps[producer].consumed_by.push_back({});
        st.frames.back().stack.push_back(Cell{std::move(v), {{producer, ord}}});
    }

    // ---- regions --------------------------------------------------------

    static void join_slot(Slot& cur, const Slot& pre) {
        if (!(cur.v == pre.v)) cur.v = SymValue::make_opaque();
        add_deps(cur.writers, pre.writers);
    }

    void join_region(State& st, Frame& fr, OpenRegion& r) {
        for (auto& [slot, cur] : fr.locals) {
            auto it = r.pre_locals.find(slot);
            if (it == r.pre_locals.end()) {
                // first written inside the region: unset on the alternative
                cur.v = SymValue::make_opaque();
            } else {
                join_slot(cur, it->second);
            }
        }
        for (size_t i = 0; i < fr.stack.size() && i < r.pre_stack.size(); ++i) {
            Cell& cur = fr.stack[i];
            const Cell& pre = r.pre_stack[i];
            if (!(cur.v == pre.v)) cur.v = SymValue::make_opaque();
            for (const auto& o : pre.origin)
                if (std::find(cur.origin.begin(), cur.origin.end(), o) == cur.origin.end())
                    cur.origin.push_back(o);
        }
        for (auto& [key, cur] : st.statics) {
            auto it = r.pre_statics.find(key);
            Slot dflt{SymValue::make_null(), {}};
            join_slot(cur, it == r.pre_statics.end() ? dflt : it->second);
        }
        for (auto& [oid, fields] : st.heap) {
            auto hit = r.pre_heap.find(oid);
            for (auto& [fname, cur] : fields) {
                if (hit == r.pre_heap.end()) {
                    cur.v = SymValue::make_opaque();
                    continue;
                }
                auto fit = hit->second.find(fname);
                Slot dflt{SymValue::make_null(), {}};
                join_slot(cur, fit == hit->second.end() ? dflt : fit->second);
            }
        }
    }

    void snapshot(State& st, Frame& fr, OpenRegion& r) {
        r.pre_locals = fr.locals;
        r.pre_stack = fr.stack;
        r.pre_statics = st.statics;
        r.pre_heap = st.heap;
    }

    void close_region(State& st, Frame& fr, bool force) {
        while (!fr.regions.empty()) {
            OpenRegion& r = fr.regions.back();
            bool due = force || (r.shape != BranchShape::BackEdge && fr.pc >= r.close_pc);
            if (!due) break;
            if (r.join_on_close) join_region(st, fr, r);
            st.notes.push_back({r.ifz_step, r.open_step, static_cast<int>(st.steps.size()),
                                r.shape, r.taken, r.forced});
            fr.regions.pop_back();
        }
    }

    void close_all_frames(State& st) {
        for (auto it = st.frames.rbegin(); it != st.frames.rend(); ++it)
            close_region(st, *it, /*force=*/true);
    }

    // ---- dispatch helpers ----------------------------------------------

    /// Bodied methods any subtype receiver could reach for this operand.
    std::vector<MethodId> bodied_candidates(const MethodRef& ref) const {
        std::set<MethodId> out;
        auto consider = [&](const std::string& cls) {
            std::string defining;
            MethodRef probe{cls, ref.name, ref.arity};
            const MethodDef* m = p_.resolve_method(probe, &defining);
            if (m && !m->is_extern) out.insert({defining, ref.name, ref.arity});
        };
        consider(ref.cls);
        for (const auto& sub : hier_.subtypes_of(ref.cls)) consider(sub);
        return {out.begin(), out.end()};
    }

    bool on_frame_stack(const State& st, const MethodId& id) const {
        for (const auto& fr : st.frames)
            if (fr.method == id) return true;
        return false;
    }

    // ---- trace emission -------------------------------------------------

    void finish_path(State& st, PathEnd why, const std::string& detail) {
        close_all_frames(st);
        switch (why) {
            case PathEnd::Returned:
            case PathEnd::RecursionCut: break;
            case PathEnd::Thrown:
                threw_ = true;
                message("throw on path '" + st.path_id + "': " + detail);
                break;
            case PathEnd::Errored:
                errored_ = true;
                message("error on path '" + st.path_id + "': " + detail);
                break;
        }
        for (const auto& rec : st.sinks) {
            bool sourced = false;
            for (int s : st.sources)
                if (s < rec.step) {
                    sourced = true;
                    break;
                }
            if (!sourced) continue;
            Trace t;
            t.endpoint_key = endpoint_.key();
            t.steps.assign(st.steps.begin(), st.steps.begin() + rec.step + 1);
            int limit = rec.step + 1;
            for (auto& ts : t.steps)
                for (auto& consumers : ts.consumed_by)
                    consumers.erase(
                        std::remove_if(consumers.begin(), consumers.end(),
                                       [&](int c) { return c >= limit; }),
                        consumers.end());
            for (const auto& n : st.notes) {
                if (n.ifz_step >= limit) continue;
                BranchNote clipped = n;
                clipped.open_step = std::min(clipped.open_step, limit);
                clipped.close_step = std::min(clipped.close_step, limit);
                t.notes.push_back(clipped);
            }
            std::sort(t.notes.begin(), t.notes.end(),
                      [](const BranchNote& a, const BranchNote& b) {
                          return a.ifz_step < b.ifz_step;
                      });
            t.sink_step = rec.step;
            t.site = rec.site;
            for (int s : st.sources)
                if (s < rec.step) t.source_steps.push_back(s);
            t.path_id = st.path_id;
            res_.traces.push_back(std::move(t));
        }
    }

    // ---- extern call semantics ------------------------------------------

    void extern_call(State& st, int si, const Frame& fr, const std::string& key,
                     const MethodRef& ref, const std::vector<Cell>& args) {
        TraceStep& step = st.steps[si];
        for (const auto& a : args) add_deps(step.deps, origin_steps(a));
        std::string rkey = key;
        TaintConfig::Role role = cfg_.role_of(rkey);
        if (role == TaintConfig::Role::Unknown && rkey != ref.key()) {
            rkey = ref.key();
            role = cfg_.role_of(rkey);
        }
        switch (role) {
            case TaintConfig::Role::Source:
                step.is_source = true;
                st.sources.push_back(si);
                push_cell(st, si, SymValue::make_opaque());
                break;
            case TaintConfig::Role::Sink:
                step.is_sink = true;
                st.sinks.push_back({si, SinkSite{fr.method.key(), step.instr_index}});
                break;
            case TaintConfig::Role::Sanitizer:
                push_cell(st, si, SymValue::make_opaque());
                break;
            case TaintConfig::Role::Extern: {
                ExternKind kind = cfg_.externs.at(rkey);
                switch (kind) {
                    case ExternKind::Void: break;
                    case ExternKind::Identity:
                        if (!args.empty())
                            push_cell(st, si, args.front().v);
                        else
                            push_cell(st, si, SymValue::make_opaque());
                        break;
                    case ExternKind::Concat: {
                        bool all = true;
                        std::string cat;
                        for (const auto& a : args) {
                            if (!stringable(a.v)) {
                                all = false;
                                break;
                            }
                            cat += stringify(a.v);
                        }
                        push_cell(st, si,
                                  all ? SymValue::make_str(cat) : SymValue::make_opaque());
                        break;
                    }
                    case ExternKind::OracleInput:
                        push_cell(st, si, SymValue::make_opaque());
                        break;
                }
                break;
            }
            case TaintConfig::Role::Unknown:
                break; // assumed void; the verifier reported the warning
        }
    }

    // ---- clinit triggering ----------------------------------------------

    /// Classes whose initializers must run before `ins` executes, outermost
    /// superclass first. Empty when everything is already initialized.
    std::vector<const MethodDef*> pending_clinits(State& st, const Instruction& ins,
                                                  std::vector<MethodId>* ids) {
        std::string cls;
        switch (ins.op) {
            case Op::New: cls = ins.cls; break;
            case Op::GetStatic:
            case Op::PutStatic: cls = ins.fref.cls; break;
            case Op::InvokeStatic: cls = ins.mref.cls; break;
            default: return {};
        }
        std::vector<std::pair<MethodId, const MethodDef*>> chain;
        std::set<std::string> seen;
        for (const ClassDef* c = p_.find_class(cls); c && seen.insert(c->name).second;
             c = c->superclass ? p_.find_class(*c->superclass) : nullptr) {
            if (st.initialized.count(c->name)) continue;
            st.initialized.insert(c->name);
            const MethodDef* init = c->find_method("<clinit>", 0);
            if (init && !init->is_extern) chain.push_back({{c->name, "<clinit>", 0}, init});
        }
        std::reverse(chain.begin(), chain.end()); // superclass first
        std::vector<const MethodDef*> defs;
        for (auto& [id, d] : chain) {
            ids->push_back(id);
            defs.push_back(d);
        }
        return defs;
    }

    // ---- the interpreter loop -------------------------------------------

    StepOutcome step(State& st, std::deque<State>& work) {
        Frame* frp = &st.frames.back();
        close_region(st, *frp, /*force=*/false);
        if (frp->pc < 0 || frp->pc >= static_cast<int>(frp->def->body.size())) {
            finish_path(st, PathEnd::Errored, "control fell off " + frp->method.key());
            return StepOutcome::Done;
        }
        const Instruction ins = frp->def->body[frp->pc];

        // Run pending static initializers before the triggering instruction.
        std::vector<MethodId> clinit_ids;
        auto clinits = pending_clinits(st, ins, &clinit_ids);
        if (!clinits.empty()) {
            // Push in reverse so the outermost superclass executes first.
            for (size_t i = clinits.size(); i-- > 0;) {
                Frame nf;
                nf.method = clinit_ids[i];
                nf.def = clinits[i];
                nf.uid = st.next_uid++;
                nf.invoke_step = -1;
                st.frames.push_back(std::move(nf));
            }
            return StepOutcome::Continue;
        }

        ++res_.executed_instructions;
        int si = static_cast<int>(st.steps.size());
        {
            TraceStep ts;
            ts.method = frp->method;
            ts.instr_index = frp->pc;
            ts.ins = ins;
            ts.frame_uid = frp->uid;
            ts.invoke_step = frp->invoke_step;
            st.steps.push_back(std::move(ts));
        }
        Frame& fr = *frp;
        auto underflow = [&]() {
            finish_path(st, PathEnd::Errored, "stack underflow in " + fr.method.key());
            return StepOutcome::Done;
        };

        switch (ins.op) {
            case Op::ConstInt:
                push_cell(st, si, SymValue::make_int(ins.int_val));
                break;
            case Op::ConstStr:
                push_cell(st, si, SymValue::make_str(ins.str_val));
                break;
            case Op::ConstNull:
                push_cell(st, si, SymValue::make_null());
                break;
            case Op::Load: {
                Slot& sl = fr.locals[ins.slot];
                st.steps[si].deps = sl.writers;
                push_cell(st, si, sl.v);
                break;
            }
            case Op::Store: {
                Cell c;
                if (!pop_cell(st, c, si)) return underflow();
                st.steps[si].deps = origin_steps(c);
                fr.locals[ins.slot] = Slot{c.v, {si}};
                break;
            }
            case Op::Add:
            case Op::Sub:
            case Op::Mul: {
                Cell b, a;
                if (!pop_cell(st, b, si) || !pop_cell(st, a, si)) return underflow();
                add_deps(st.steps[si].deps, origin_steps(a));
                add_deps(st.steps[si].deps, origin_steps(b));
                SymValue v = SymValue::make_opaque();
                if (a.v.kind == SymValue::Kind::Int && b.v.kind == SymValue::Kind::Int) {
                    int64_t x = a.v.int_val, y = b.v.int_val;
                    v = SymValue::make_int(ins.op == Op::Add   ? x + y
                                           : ins.op == Op::Sub ? x - y
                                                               : x * y);
                }
                push_cell(st, si, v);
                break;
            }
            case Op::Concat: {
                Cell b, a;
                if (!pop_cell(st, b, si) || !pop_cell(st, a, si)) return underflow();
                add_deps(st.steps[si].deps, origin_steps(a));
                add_deps(st.steps[si].deps, origin_steps(b));
                SymValue v = stringable(a.v) && stringable(b.v)
                                 ? SymValue::make_str(stringify(a.v) + stringify(b.v))
                                 : SymValue::make_opaque();
                push_cell(st, si, v);
                break;
            }
            case Op::CmpEq:
            case Op::CmpNe:
            case Op::CmpLt: {
                Cell b, a;
                if (!pop_cell(st, b, si) || !pop_cell(st, a, si)) return underflow();
                add_deps(st.steps[si].deps, origin_steps(a));
                add_deps(st.steps[si].deps, origin_steps(b));
                SymValue v = SymValue::make_opaque();
                if (a.v.is_const() && b.v.is_const()) {
                    if (ins.op == Op::CmpLt) {
                        if (a.v.kind == SymValue::Kind::Int && b.v.kind == SymValue::Kind::Int)
                            v = SymValue::make_int(a.v.int_val < b.v.int_val ? 1 : 0);
                    } else {
                        bool eq = a.v == b.v;
                        v = SymValue::make_int((ins.op == Op::CmpEq) == eq ? 1 : 0);
                    }
                }
                push_cell(st, si, v);
                break;
            }
            case Op::Dup: {
                if (fr.stack.empty()) return underflow();
                Cell& top = fr.stack.back();
                st.steps[si].deps = origin_steps(top);
                push_cell(st, si, top.v);
                break;
            }
            case Op::Pop: {
                Cell c;
                if (!pop_cell(st, c, si)) return underflow();
                st.steps[si].deps = origin_steps(c);
                break;
            }
            case Op::Swap: {
                Cell b, a;
                if (!pop_cell(st, b, si) || !pop_cell(st, a, si)) return underflow();
                add_deps(st.steps[si].deps, origin_steps(a));
                add_deps(st.steps[si].deps, origin_steps(b));
                push_cell(st, si, b.v);
                push_cell(st, si, a.v);
                break;
            }
            case Op::New: {
                int id = st.next_obj++;
                st.heap[id]; // materialize the object
                push_cell(st, si, SymValue::make_obj(id, ins.cls));
                break;
            }
            case Op::GetField: {
                Cell recv;
                if (!pop_cell(st, recv, si)) return underflow();
                add_deps(st.steps[si].deps, origin_steps(recv));
                auto& opaque_writes = st.opaque_field_writes[ins.fref.name];
                SymValue v = SymValue::make_opaque();
                if (recv.v.kind == SymValue::Kind::Obj) {
                    auto& fields = st.heap[recv.v.obj_id];
                    auto it = fields.find(ins.fref.name);
                    if (it != fields.end()) {
                        add_deps(st.steps[si].deps, it->second.writers);
                        v = opaque_writes.empty() ? it->second.v : SymValue::make_opaque();
                    } else {
                        v = opaque_writes.empty() ? SymValue::make_null()
                                                  : SymValue::make_opaque();
                    }
                    add_deps(st.steps[si].deps, opaque_writes);
                } else if (recv.v.kind == SymValue::Kind::Opaque) {
                    add_deps(st.steps[si].deps, opaque_writes);
                    for (const auto& [oid, fields] : st.heap) {
                        auto it = fields.find(ins.fref.name);
                        if (it != fields.end()) add_deps(st.steps[si].deps, it->second.writers);
                    }
                } else {
                    finish_path(st, PathEnd::Errored,
                                "field read on non-object in " + fr.method.key());
                    return StepOutcome::Done;
                }
                push_cell(st, si, v);
                break;
            }
            case Op::PutField: {
                Cell val, recv;
                if (!pop_cell(st, val, si) || !pop_cell(st, recv, si)) return underflow();
                add_deps(st.steps[si].deps, origin_steps(val));
                add_deps(st.steps[si].deps, origin_steps(recv));
                if (recv.v.kind == SymValue::Kind::Obj) {
                    st.heap[recv.v.obj_id][ins.fref.name] = Slot{val.v, {si}};
                } else if (recv.v.kind == SymValue::Kind::Opaque) {
                    st.opaque_field_writes[ins.fref.name].push_back(si);
                } else {
                    finish_path(st, PathEnd::Errored,
                                "field write on non-object in " + fr.method.key());
                    return StepOutcome::Done;
                }
                break;
            }
            case Op::GetStatic: {
                std::string key = ins.fref.key();
                auto it = st.statics.find(key);
                if (it == st.statics.end()) {
                    push_cell(st, si, SymValue::make_null());
                } else {
                    st.steps[si].deps = it->second.writers;
                    push_cell(st, si, it->second.v);
                }
                break;
            }
            case Op::PutStatic: {
                Cell c;
                if (!pop_cell(st, c, si)) return underflow();
                st.steps[si].deps = origin_steps(c);
                st.statics[ins.fref.key()] = Slot{c.v, {si}};
                break;
            }
            case Op::Goto:
                fr.pc = ins.target;
                return StepOutcome::Continue;
            case Op::Ifz:
                return branch(st, work, si, ins);
            case Op::Return: {
                close_region(st, fr, /*force=*/true);
                st.frames.pop_back();
                if (st.frames.empty()) {
                    finish_path(st, PathEnd::Returned, "");
                    return StepOutcome::Done;
                }
                return StepOutcome::Continue;
            }
            case Op::ReturnVal: {
                Cell c;
                if (!pop_cell(st, c, si)) return underflow();
                st.steps[si].deps = origin_steps(c);
                close_region(st, fr, /*force=*/true);
                st.frames.pop_back();
                if (st.frames.empty()) {
                    finish_path(st, PathEnd::Returned, "");
                    return StepOutcome::Done;
                }
                push_cell(st, si, c.v);
                return StepOutcome::Continue;
            }
            case Op::Throw: {
                Cell c;
                if (!pop_cell(st, c, si)) return underflow();
                st.steps[si].deps = origin_steps(c);
                finish_path(st, PathEnd::Thrown, fr.method.key() + " at " +
                                                     std::to_string(st.steps[si].instr_index));
                return StepOutcome::Done;
            }
            case Op::InvokeStatic:
            case Op::InvokeVirtual:
            case Op::InvokeInterface:
                return invoke(st, work, si, ins);
        }
        fr.pc++;
        return StepOutcome::Continue;
    }

    StepOutcome branch(State& st, std::deque<State>& work, int si, const Instruction& ins) {
        Frame& fr = st.frames.back();
        Cell cond;
        if (!pop_cell(st, cond, si)) {
            finish_path(st, PathEnd::Errored, "stack underflow in " + fr.method.key());
            return StepOutcome::Done;
        }
        st.steps[si].deps = origin_steps(cond);
        BranchInfo bi = classify_branch(*fr.def, fr.pc);
        int pc = fr.pc;

        if (bi.shape == BranchShape::BackEdge) {
            std::pair<uint64_t, int> key{fr.uid, pc};
            if (st.back_forced.count(key)) {
                // Second visit: leave the loop and close its region.
                for (size_t i = fr.regions.size(); i-- > 0;) {
                    OpenRegion& r = fr.regions[i];
                    if (r.shape == BranchShape::BackEdge && r.backedge_key == key) {
                        join_region(st, fr, r);
                        st.notes.push_back({r.ifz_step, r.open_step,
                                            static_cast<int>(st.steps.size()), r.shape,
                                            /*taken=*/true, /*forced=*/false});
                        fr.regions.erase(fr.regions.begin() + i);
                        break;
                    }
                }
                fr.pc = pc + 1;
                return StepOutcome::Continue;
            }
            // First visit: one continuation skips the loop, one runs the
            // body once; a constant condition does not suppress the fork.
            State skip = st;
            skip.path_id += '0';
            skip.notes.push_back({si, si + 1, si + 1, BranchShape::BackEdge, false, false});
            skip.frames.back().pc = pc + 1;

            State take = std::move(st);
            take.path_id += '1';
            take.back_forced.insert(key);
            {
                Frame& tfr = take.frames.back();
                OpenRegion r;
                r.ifz_step = si;
                r.open_step = si + 1;
                r.shape = BranchShape::BackEdge;
                r.taken = true;
                r.join_on_close = true;
                r.backedge_key = key;
                snapshot(take, tfr, r);
                tfr.regions.push_back(std::move(r));
                tfr.pc = ins.target;
            }
            enqueue(work, std::move(skip), std::move(take));
            return StepOutcome::Forked;
        }

        std::optional<bool> zero = cond.v.is_zero();
        if (zero.has_value()) {
            bool jump = *zero;
            if ((jump && bi.shape == BranchShape::OneSided)) {
                // Guarded body skipped for sure; nothing to track.
                st.notes.push_back({si, si + 1, si + 1, bi.shape, true, true});
            } else {
                OpenRegion r;
                r.ifz_step = si;
                r.open_step = si + 1;
                r.shape = bi.shape;
                r.close_pc = bi.close_pc;
                r.taken = jump;
                r.forced = true;
                fr.regions.push_back(std::move(r));
            }
            fr.pc = jump ? ins.target : pc + 1;
            return StepOutcome::Continue;
        }

        if (bi.shape == BranchShape::OneSided) {
            // No fork: run the guarded body and merge its effects at the
            // join point so later paths stay feasible either way.
            OpenRegion r;
            r.ifz_step = si;
            r.open_step = si + 1;
            r.shape = BranchShape::OneSided;
            r.close_pc = bi.close_pc;
            r.taken = false;
            r.join_on_close = true;
            snapshot(st, fr, r);
            fr.regions.push_back(std::move(r));
            fr.pc = pc + 1;
            return StepOutcome::Continue;
        }

        // Two-sided: fork into the fall-through and taken arms.
        State fall = st;
        fall.path_id += '0';
        {
            Frame& ffr = fall.frames.back();
            OpenRegion r;
            r.ifz_step = si;
            r.open_step = si + 1;
            r.shape = BranchShape::TwoSided;
            r.close_pc = bi.close_pc;
            r.taken = false;
            ffr.regions.push_back(std::move(r));
            ffr.pc = pc + 1;
        }
        State take = std::move(st);
        take.path_id += '1';
        {
            Frame& tfr = take.frames.back();
            OpenRegion r;
            r.ifz_step = si;
            r.open_step = si + 1;
            r.shape = BranchShape::TwoSided;
            r.close_pc = bi.close_pc;
            r.taken = true;
            tfr.regions.push_back(std::move(r));
            tfr.pc = ins.target;
        }
        enqueue(work, std::move(fall), std::move(take));
        return StepOutcome::Forked;
    }

    void enqueue(std::deque<State>& work, State&& first, State&& second) {
        if (policy_ == ForkPolicy::Fifo) {
            work.push_back(std::move(first));
            work.push_back(std::move(second));
        } else {
            work.push_front(std::move(second));
            work.push_front(std::move(first));
        }
    }

    StepOutcome invoke(State& st, std::deque<State>& work, int si, const Instruction& ins) {
        (void)work;
        Frame& fr = st.frames.back();
        int arity = ins.mref.arity;
        std::vector<Cell> args(arity);
        for (int i = arity - 1; i >= 0; --i) {
            if (!pop_cell(st, args[i], si)) {
                finish_path(st, PathEnd::Errored, "stack underflow in " + fr.method.key());
                return StepOutcome::Done;
            }
        }
        for (const auto& a : args) st.steps[si].arg_producers.push_back(origin_steps(a));
        fr.pc++; // the callee returns past the call

        const MethodDef* target = nullptr;
        std::string defining;
        bool special = ins.mref.name == "<init>" || ins.mref.name == "<clinit>";
        if (ins.op == Op::InvokeStatic || special) {
            target = p_.resolve_method(ins.mref, &defining);
            if (!target) {
                finish_path(st, PathEnd::Errored, "undeclared method " + ins.mref.key());
                return StepOutcome::Done;
            }
        } else {
            const Cell& recv = args.at(0);
            switch (recv.v.kind) {
                case SymValue::Kind::Obj: {
                    MethodRef probe{recv.v.obj_cls, ins.mref.name, ins.mref.arity};
                    target = p_.resolve_method(probe, &defining);
                    if (!target) {
                        finish_path(st, PathEnd::Errored,
                                    "no method " + probe.key() + " on receiver class");
                        return StepOutcome::Done;
                    }
                    break;
                }
                case SymValue::Kind::Opaque: {
                    auto candidates = bodied_candidates(ins.mref);
                    if (candidates.size() > 1) {
                        finish_path(st, PathEnd::Errored,
                                    "ambiguous dispatch at " + ins.mref.key() + ": " +
                                        std::to_string(candidates.size()) + " implementations");
                        return StepOutcome::Done;
                    }
                    if (candidates.size() == 1) {
                        defining = candidates[0].cls;
                        target = p_.find_class(defining)->find_method(ins.mref.name,
                                                                      ins.mref.arity);
                    } else {
                        target = p_.resolve_method(ins.mref, &defining);
                        // extern or missing: handled below
                    }
                    break;
                }
                case SymValue::Kind::Null:
                    finish_path(st, PathEnd::Errored,
                                "null receiver at " + ins.mref.key() + " in " + fr.method.key());
                    return StepOutcome::Done;
                default:
                    finish_path(st, PathEnd::Errored,
                                "non-object receiver at " + ins.mref.key());
                    return StepOutcome::Done;
            }
        }

        if (target && !target->is_extern) {
            MethodId id{defining, ins.mref.name, ins.mref.arity};
            if (!scope_.contains(id)) {
                // Outside the slice: model as an opaque external effect.
                TraceStep& step = st.steps[si];
                for (const auto& a : args) add_deps(step.deps, origin_steps(a));
                if (target->returns_value()) push_cell(st, si, SymValue::make_opaque());
                return StepOutcome::Continue;
            }
            if (on_frame_stack(st, id)) {
                finish_path(st, PathEnd::RecursionCut, "");
                return StepOutcome::Done;
            }
            if (st.frames.size() >= 128) {
                finish_path(st, PathEnd::Errored, "call depth limit at " + id.key());
                return StepOutcome::Done;
            }
            Frame nf;
            nf.method = id;
            nf.def = target;
            nf.uid = st.next_uid++;
            nf.invoke_step = si;
            for (int i = 0; i < arity; ++i)
                nf.locals[i] = Slot{args[i].v, origin_steps(args[i])};
            st.frames.push_back(std::move(nf));
            return StepOutcome::Continue;
        }

        std::string key = target ? MethodId{defining, ins.mref.name, ins.mref.arity}.key()
                                 : ins.mref.key();
        extern_call(st, si, fr, key, ins.mref, args);
        return StepOutcome::Continue;
    }
};

} // namespace

EmuResult emulate_endpoint(const Program& p, const TaintConfig& cfg, const MethodId& endpoint,
                           const Scope& scope, const EmuLimits& limits, ForkPolicy policy) {
    return Engine(p, cfg, endpoint, scope, limits, policy).run();
}

} // namespace tg
