#include "tg/interpreter.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include "tg/printer.hpp"

namespace tg {
namespace {

struct RtValue {
    enum class Kind { Null, Int, Str, Obj };
    Kind kind = Kind::Null;
    int64_t i = 0;
    std::string s;
    int obj = -1;
    std::string obj_cls;

    static RtValue null() { return {}; }
    static RtValue of_int(int64_t v) {
        RtValue r;
        r.kind = Kind::Int;
        r.i = v;
        return r;
    }
    static RtValue of_str(std::string v) {
        RtValue r;
        r.kind = Kind::Str;
        r.s = std::move(v);
        return r;
    }
};

std::string render_value(const RtValue& v) {
    switch (v.kind) {
        case RtValue::Kind::Null: return "null";
        case RtValue::Kind::Int: return std::to_string(v.i);
        case RtValue::Kind::Str: return quote_gasm_string(v.s);
        case RtValue::Kind::Obj: return "obj:" + v.obj_cls + "#" + std::to_string(v.obj);
    }
    return "null";
}

/// How concatenation spells a value out.
std::string stringify(const RtValue& v) {
    switch (v.kind) {
        case RtValue::Kind::Null: return "null";
        case RtValue::Kind::Int: return std::to_string(v.i);
        case RtValue::Kind::Str: return v.s;
        case RtValue::Kind::Obj: break;
    }
    throw std::runtime_error("unreachable");
}

struct ThrowSignal {
    RtValue value;
};
struct ErrorSignal {
    std::string msg;
};
struct TimeoutSignal {};

struct Interp {
    const Program& p;
    const TaintConfig& cfg;
    const TestInput& input;
    RunLimits lim;

    long steps = 0;
    std::vector<std::map<std::string, RtValue>> heap;
    std::map<std::string, std::map<std::string, RtValue>> statics;
    std::set<std::string> initialized;
    std::map<std::string, int> occurrence;
    std::vector<SinkCall> sinks;

    Interp(const Program& p_, const TaintConfig& cfg_, const TestInput& input_, RunLimits lim_)
        : p(p_), cfg(cfg_), input(input_), lim(lim_) {}

    RtValue fresh_object(const std::string& cls) {
        RtValue r;
        r.kind = RtValue::Kind::Obj;
        r.obj = static_cast<int>(heap.size());
        r.obj_cls = cls;
        heap.emplace_back();
        return r;
    }

    RtValue from_json(const nlohmann::json& j, const std::string& what) {
        if (j.is_null()) return RtValue::null();
        if (j.is_number_integer()) return RtValue::of_int(j.get<int64_t>());
        if (j.is_string()) return RtValue::of_str(j.get<std::string>());
        throw ErrorSignal{"unsupported input value for " + what + ": " + j.dump()};
    }

    static bool is_zero(const RtValue& v) {
        return v.kind == RtValue::Kind::Null || (v.kind == RtValue::Kind::Int && v.i == 0);
    }

    static bool equal(const RtValue& a, const RtValue& b) {
        if (a.kind != b.kind) return false;
        switch (a.kind) {
            case RtValue::Kind::Null: return true;
            case RtValue::Kind::Int: return a.i == b.i;
            case RtValue::Kind::Str: return a.s == b.s;
            case RtValue::Kind::Obj: return a.obj == b.obj;
        }
        return false;
    }

    /// Runs pending static initializers for `cls` and its superclasses,
    /// outermost superclass first; every visited class is marked so each
    /// initializer runs at most once.
    void ensure_initialized(const std::string& cls, int depth) {
        std::vector<std::pair<MethodId, const MethodDef*>> chain;
        std::set<std::string> seen;
        for (const ClassDef* c = p.find_class(cls); c && seen.insert(c->name).second;
             c = c->superclass ? p.find_class(*c->superclass) : nullptr) {
            if (initialized.count(c->name)) continue;
            initialized.insert(c->name);
            const MethodDef* init = c->find_method("<clinit>", 0);
            if (init && !init->is_extern) chain.push_back({{c->name, "<clinit>", 0}, init});
        }
        for (size_t i = chain.size(); i-- > 0;) exec(chain[i].first, *chain[i].second, {}, depth);
    }

    RtValue arg_from_input(const MethodDef& def, int index) {
        const nlohmann::json* j = nullptr;
        if (index < static_cast<int>(input.endpoint_args.size())) j = &input.endpoint_args[index];
        if (!j || j->is_null()) {
            auto it = def.param_classes.find(index);
            if (it != def.param_classes.end()) return fresh_object(it->second);
            return RtValue::null();
        }
        return from_json(*j, "argument " + std::to_string(index));
    }

    /// Returns the configured value for one occurrence of a source or
    /// oracle-input extern; errors when the input maps neither the
    /// occurrence nor "*".
    RtValue input_return(const std::string& key) {
        int n = occurrence[key]++;
        auto it = input.extern_returns.find(key);
        if (it != input.extern_returns.end()) {
            auto hit = it->second.find(std::to_string(n));
            if (hit == it->second.end()) hit = it->second.find("*");
            if (hit != it->second.end())
                return from_json(hit->second, key + " occurrence " + std::to_string(n));
        }
        throw ErrorSignal{"no input mapping for " + key + " occurrence " + std::to_string(n)};
    }

    void extern_call(const MethodId& caller, int pc, const std::string& key,
                     const MethodRef& ref, std::vector<RtValue>& args,
                     std::vector<RtValue>& stack) {
        std::string rkey = key;
        TaintConfig::Role role = cfg.role_of(rkey);
        if (role == TaintConfig::Role::Unknown && rkey != ref.key()) {
            rkey = ref.key();
            role = cfg.role_of(rkey);
        }
        switch (role) {
            case TaintConfig::Role::Source: stack.push_back(input_return(rkey)); break;
            case TaintConfig::Role::Sink: {
                SinkCall sc;
                sc.method_key = caller.key();
                sc.instr_index = pc;
                sc.callee = rkey;
                for (const RtValue& a : args) sc.args.push_back(render_value(a));
                sinks.push_back(std::move(sc));
                break;
            }
            case TaintConfig::Role::Sanitizer:
                if (args.empty()) throw ErrorSignal{"sanitizer " + rkey + " has no argument"};
                stack.push_back(args.front());
                break;
            case TaintConfig::Role::Extern:
                switch (cfg.externs.at(rkey)) {
                    case ExternKind::Void: break;
                    case ExternKind::Identity:
                        if (args.empty()) throw ErrorSignal{"identity extern " + rkey +
                                                            " has no argument"};
                        stack.push_back(args.front());
                        break;
                    case ExternKind::Concat: {
                        std::string out;
                        for (const RtValue& a : args) {
                            if (a.kind == RtValue::Kind::Obj)
                                throw ErrorSignal{"concat of an object value at " + rkey};
                            out += stringify(a);
                        }
                        stack.push_back(RtValue::of_str(std::move(out)));
                        break;
                    }
                    case ExternKind::OracleInput: stack.push_back(input_return(rkey)); break;
                }
                break;
            case TaintConfig::Role::Unknown:
                break; // unconfigured extern: a silent void effect
        }
    }

    std::optional<RtValue> exec(const MethodId& id, const MethodDef& def,
                                std::vector<RtValue> args, int depth) {
        if (depth > lim.max_depth) throw ErrorSignal{"call depth limit at " + id.key()};
        std::map<int, RtValue> locals;
        for (size_t i = 0; i < args.size(); ++i) locals[static_cast<int>(i)] = args[i];
        std::vector<RtValue> stack;

        auto pop = [&]() {
            if (stack.empty()) throw ErrorSignal{"stack underflow in " + id.key()};
            RtValue v = std::move(stack.back());
            stack.pop_back();
            return v;
        };

        int pc = 0;
        while (true) {
            if (pc < 0 || pc >= static_cast<int>(def.body.size()))
                throw ErrorSignal{"control fell off " + id.key()};
            if (++steps > lim.max_steps) throw TimeoutSignal{};
            const Instruction& ins = def.body[pc];
            switch (ins.op) {
                case Op::ConstInt: stack.push_back(RtValue::of_int(ins.int_val)); break;
                case Op::ConstStr: stack.push_back(RtValue::of_str(ins.str_val)); break;
                case Op::ConstNull: stack.push_back(RtValue::null()); break;
                case Op::Load: {
                    auto it = locals.find(ins.slot);
                    if (it == locals.end())
                        throw ErrorSignal{"read of unset local " + std::to_string(ins.slot) +
                                          " in " + id.key()};
                    stack.push_back(it->second);
                    break;
                }
                case Op::Store: locals[ins.slot] = pop(); break;
                case Op::Add:
                case Op::Sub:
                case Op::Mul: {
                    RtValue b = pop(), a = pop();
                    if (a.kind != RtValue::Kind::Int || b.kind != RtValue::Kind::Int)
                        throw ErrorSignal{"arithmetic on non-integer in " + id.key()};
                    int64_t r = ins.op == Op::Add   ? a.i + b.i
                                : ins.op == Op::Sub ? a.i - b.i
                                                    : a.i * b.i;
                    stack.push_back(RtValue::of_int(r));
                    break;
                }
                case Op::Concat: {
                    RtValue b = pop(), a = pop();
                    if (a.kind == RtValue::Kind::Obj || b.kind == RtValue::Kind::Obj)
                        throw ErrorSignal{"concat of an object value in " + id.key()};
                    stack.push_back(RtValue::of_str(stringify(a) + stringify(b)));
                    break;
                }
                case Op::CmpEq: {
                    RtValue b = pop(), a = pop();
                    stack.push_back(RtValue::of_int(equal(a, b) ? 1 : 0));
                    break;
                }
                case Op::CmpNe: {
                    RtValue b = pop(), a = pop();
                    stack.push_back(RtValue::of_int(equal(a, b) ? 0 : 1));
                    break;
                }
                case Op::CmpLt: {
                    RtValue b = pop(), a = pop();
                    if (a.kind != RtValue::Kind::Int || b.kind != RtValue::Kind::Int)
                        throw ErrorSignal{"comparison on non-integer in " + id.key()};
                    stack.push_back(RtValue::of_int(a.i < b.i ? 1 : 0));
                    break;
                }
                case Op::Dup: {
                    RtValue v = pop();
                    stack.push_back(v);
                    stack.push_back(std::move(v));
                    break;
                }
                case Op::Pop: pop(); break;
                case Op::Swap: {
                    RtValue b = pop(), a = pop();
                    stack.push_back(std::move(b));
                    stack.push_back(std::move(a));
                    break;
                }
                case Op::New:
                    ensure_initialized(ins.cls, depth);
                    stack.push_back(fresh_object(ins.cls));
                    break;
                case Op::GetField: {
                    RtValue r = pop();
                    if (r.kind != RtValue::Kind::Obj)
                        throw ErrorSignal{"field read on non-object in " + id.key()};
                    auto& fields = heap[static_cast<size_t>(r.obj)];
                    auto it = fields.find(ins.fref.name);
                    stack.push_back(it == fields.end() ? RtValue::null() : it->second);
                    break;
                }
                case Op::PutField: {
                    RtValue v = pop(), r = pop();
                    if (r.kind != RtValue::Kind::Obj)
                        throw ErrorSignal{"field write on non-object in " + id.key()};
                    heap[static_cast<size_t>(r.obj)][ins.fref.name] = std::move(v);
                    break;
                }
                case Op::GetStatic: {
                    ensure_initialized(ins.fref.cls, depth);
                    auto& fields = statics[ins.fref.cls];
                    auto it = fields.find(ins.fref.name);
                    stack.push_back(it == fields.end() ? RtValue::null() : it->second);
                    break;
                }
                case Op::PutStatic:
                    ensure_initialized(ins.fref.cls, depth);
                    statics[ins.fref.cls][ins.fref.name] = pop();
                    break;
                case Op::InvokeStatic:
                case Op::InvokeVirtual:
                case Op::InvokeInterface: {
                    int arity = ins.mref.arity;
                    std::vector<RtValue> call_args(static_cast<size_t>(arity));
                    for (int i = arity - 1; i >= 0; --i) call_args[static_cast<size_t>(i)] = pop();

                    const MethodDef* target = nullptr;
                    std::string defining;
                    bool special = ins.mref.name == "<init>" || ins.mref.name == "<clinit>";
                    if (ins.op == Op::InvokeStatic || special) {
                        ensure_initialized(ins.mref.cls, depth);
                        target = p.resolve_method(ins.mref, &defining);
                        if (!target) throw ErrorSignal{"undeclared method " + ins.mref.key()};
                    } else {
                        const RtValue& recv = call_args.at(0);
                        if (recv.kind == RtValue::Kind::Null)
                            throw ErrorSignal{"null receiver at " + ins.mref.key() + " in " +
                                              id.key()};
                        if (recv.kind != RtValue::Kind::Obj)
                            throw ErrorSignal{"non-object receiver at " + ins.mref.key()};
                        MethodRef probe{recv.obj_cls, ins.mref.name, ins.mref.arity};
                        target = p.resolve_method(probe, &defining);
                        if (!target)
                            throw ErrorSignal{"no method " + probe.key() + " on receiver class"};
                    }

                    if (target && !target->is_extern) {
                        MethodId callee{defining, ins.mref.name, ins.mref.arity};
                        auto ret = exec(callee, *target, std::move(call_args), depth + 1);
                        if (ret) stack.push_back(std::move(*ret));
                    } else {
                        std::string key =
                            target ? MethodId{defining, ins.mref.name, ins.mref.arity}.key()
                                   : ins.mref.key();
                        extern_call(id, pc, key, ins.mref, call_args, stack);
                    }
                    break;
                }
                case Op::Ifz: {
                    RtValue v = pop();
                    if (is_zero(v)) {
                        pc = ins.target;
                        continue;
                    }
                    break;
                }
                case Op::Goto: pc = ins.target; continue;
                case Op::Return: return std::nullopt;
                case Op::ReturnVal: return pop();
                case Op::Throw: throw ThrowSignal{pop()};
            }
            ++pc;
        }
    }
};

} // namespace

const char* run_status_name(RunStatus s) {
    switch (s) {
        case RunStatus::Ok: return "ok";
        case RunStatus::Threw: return "throw";
        case RunStatus::Errored: return "error";
        case RunStatus::Timeout: return "timeout";
    }
    return "?";
}

RunResult run_method(const Program& p, const TaintConfig& cfg, const MethodId& method,
                     const TestInput& input, const RunLimits& limits) {
    RunResult res;
    auto t0 = std::chrono::steady_clock::now();
    Interp in(p, cfg, input, limits);
    try {
        const ClassDef* c = p.find_class(method.cls);
        const MethodDef* m = c ? c->find_method(method.name, method.arity) : nullptr;
        if (!m || m->is_extern) throw ErrorSignal{"no such method " + method.key()};
        std::vector<RtValue> args;
        for (int i = 0; i < m->arity; ++i) args.push_back(in.arg_from_input(*m, i));
        in.exec(method, *m, std::move(args), 0);
        res.status = RunStatus::Ok;
    } catch (const ThrowSignal& t) {
        res.status = RunStatus::Threw;
        res.message = render_value(t.value);
    } catch (const ErrorSignal& e) {
        res.status = RunStatus::Errored;
        res.message = e.msg;
    } catch (const TimeoutSignal&) {
        res.status = RunStatus::Timeout;
        res.message = "step budget exhausted";
    }
    res.sink_calls = std::move(in.sinks);
    res.steps = in.steps;
    res.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace tg
