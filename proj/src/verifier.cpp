#include "tg/verifier.hpp"

#include <deque>
#include <set>
#include <sstream>

namespace tg {
namespace {

// class -> direct subtypes (subclasses and implementers)
std::map<std::string, std::vector<std::string>> childrenOf(const Program& p) {
    std::map<std::string, std::vector<std::string>> children;
    for (const auto& [name, cls] : p.classes) {
        if (cls.superclass) children[*cls.superclass].push_back(name);
        for (const auto& itf : cls.interfaces) children[itf].push_back(name);
    }
    return children;
}

class Verifier {
public:
    Verifier(const Program& p, const TaintConfig& cfg) : p_(p), cfg_(cfg), children_(childrenOf(p)) {}

    VerifyReport run() {
        if (!checkInheritanceAcyclic()) return report_;
        for (const auto& [cname, cls] : p_.classes) {
            (void)cname;
            for (const auto& [sig, m] : cls.methods) {
                (void)sig;
                if (!m.is_extern) verifyMethod(cls, m);
            }
        }
        return report_;
    }

private:
    const Program& p_;
    const TaintConfig& cfg_;
    std::map<std::string, std::vector<std::string>> children_;
    VerifyReport report_;
    std::set<std::string> warnedKeys_;

    bool checkInheritanceAcyclic() {
        // colors: 0 unvisited, 1 on stack, 2 done
        std::map<std::string, int> color;
        bool ok = true;
        auto visit = [&](auto&& self, const std::string& name) -> bool {
            int& c = color[name];
            if (c == 1) return false;
            if (c == 2) return true;
            c = 1;
            const ClassDef* cls = p_.find_class(name);
            if (cls) {
                if (cls->superclass && !self(self, *cls->superclass)) return false;
                for (const auto& itf : cls->interfaces)
                    if (!self(self, itf)) return false;
            }
            c = 2;
            return true;
        };
        for (const auto& [name, cls] : p_.classes) {
            (void)cls;
            if (!visit(visit, name)) {
                report_.errors.push_back({name, -1, "inheritance cycle involving '" + name + "'"});
                ok = false;
                break;
            }
        }
        return ok;
    }

    // All non-extern definitions of (name, arity) at or below `cls` in the
    // hierarchy, plus the walk-up resolution. Used to agree on whether a
    // dynamic call pushes a result.
    std::vector<const MethodDef*> bodiedCandidates(const MethodRef& ref) {
        std::vector<const MethodDef*> out;
        if (const MethodDef* m = p_.resolve_method(ref))
            if (!m->is_extern) out.push_back(m);
        std::deque<std::string> work{ref.cls};
        std::set<std::string> seen{ref.cls};
        while (!work.empty()) {
            std::string cur = work.front();
            work.pop_front();
            for (const auto& child : children_[cur]) {
                if (!seen.insert(child).second) continue;
                work.push_back(child);
                const ClassDef* cd = p_.find_class(child);
                if (!cd) continue;
                if (const MethodDef* m = cd->find_method(ref.name, ref.arity))
                    if (!m->is_extern) out.push_back(m);
            }
        }
        return out;
    }

    // Whether an invoke pushes a result. May append warnings/errors.
    bool callPushes(const std::string& caller, int index, const Instruction& ins) {
        const MethodRef& ref = ins.mref;
        std::vector<const MethodDef*> bodied;
        if (ins.op == Op::InvokeStatic) {
            if (const MethodDef* m = p_.resolve_method(ref); m && !m->is_extern) bodied = {m};
        } else {
            bodied = bodiedCandidates(ref);
        }
        if (!bodied.empty()) {
            bool rv = bodied.front()->returns_value();
            for (const MethodDef* m : bodied) {
                if (m->returns_value() != rv) {
                    report_.errors.push_back(
                        {caller, index,
                         "possible callees of " + ref.key() + " disagree on returning a value"});
                    break;
                }
            }
            return rv;
        }
        // extern declaration (or unresolved): semantics come from the config
        if (cfg_.role_of(ref.key()) == TaintConfig::Role::Unknown) {
            if (warnedKeys_.insert(ref.key()).second)
                report_.warnings.push_back(
                    {caller, index,
                     "no semantics configured for extern method " + ref.key() + "; assuming void"});
            return false;
        }
        return cfg_.extern_returns_value(ref.key());
    }

    void verifyMethod(const ClassDef& cls, const MethodDef& m) {
        std::string key = MethodId{cls.name, m.name, m.arity}.key();
        auto err = [&](int idx, const std::string& msg) {
            report_.errors.push_back({key, idx, msg});
        };
        if (m.body.empty()) {
            err(-1, "empty method body");
            return;
        }
        const int n = static_cast<int>(m.body.size());
        std::vector<int> depthAt(n, -1);
        std::deque<int> work;
        depthAt[0] = 0;
        work.push_back(0);
        bool sawReturn = false, sawReturnVal = false;

        while (!work.empty()) {
            int idx = work.front();
            work.pop_front();
            const Instruction& ins = m.body[idx];
            int depth = depthAt[idx];
            int pops = 0, pushes = 0;
            bool terminator = false;
            std::vector<int> succ;

            switch (ins.op) {
                case Op::ConstInt:
                case Op::ConstStr:
                case Op::ConstNull:
                case Op::New:
                case Op::Load:
                case Op::GetStatic: pushes = 1; break;
                case Op::Store:
                case Op::Pop:
                case Op::PutStatic: pops = 1; break;
                case Op::Add:
                case Op::Sub:
                case Op::Mul:
                case Op::Concat:
                case Op::CmpEq:
                case Op::CmpNe:
                case Op::CmpLt: pops = 2, pushes = 1; break;
                case Op::Dup: pops = 1, pushes = 2; break;
                case Op::Swap: pops = 2, pushes = 2; break;
                case Op::GetField: pops = 1, pushes = 1; break;
                case Op::PutField: pops = 2; break;
                case Op::InvokeStatic:
                case Op::InvokeVirtual:
                case Op::InvokeInterface:
                    pops = ins.mref.arity;
                    pushes = callPushes(key, idx, ins) ? 1 : 0;
                    break;
                case Op::Ifz:
                    pops = 1;
                    succ.push_back(ins.target);
                    break;
                case Op::Goto:
                    terminator = true; // fall-through suppressed
                    succ.push_back(ins.target);
                    break;
                case Op::Return:
                    terminator = true;
                    sawReturn = true;
                    if (depth != 0) err(idx, "return with non-empty stack (depth " +
                                                 std::to_string(depth) + ")");
                    break;
                case Op::ReturnVal:
                    terminator = true;
                    sawReturnVal = true;
                    if (depth != 1) err(idx, "return.val needs stack depth 1, have " +
                                                 std::to_string(depth));
                    break;
                case Op::Throw:
                    terminator = true;
                    pops = 1;
                    report_.unsupported.push_back({key, idx, "throw is not supported by emulation"});
                    break;
            }

            if (depth < pops) {
                err(idx, std::string("stack underflow at ") + op_name(ins.op));
                continue;
            }
            int out = depth - pops + pushes;
            if (!terminator) succ.push_back(idx + 1);
            for (int s : succ) {
                if (s >= n) {
                    err(idx, "control falls off the end of the method");
                    continue;
                }
                if (depthAt[s] == -1) {
                    depthAt[s] = out;
                    work.push_back(s);
                } else if (depthAt[s] != out) {
                    err(s, "inconsistent stack depth at join: " + std::to_string(depthAt[s]) +
                               " vs " + std::to_string(out));
                }
            }
        }

        if (sawReturn && sawReturnVal)
            err(-1, "method mixes return and return.val");
    }
};

} // namespace

std::string VerifyReport::summary() const {
    std::ostringstream out;
    out << (ok() ? "ok" : "failed") << " (" << errors.size() << " errors, " << warnings.size()
        << " warnings, " << unsupported.size() << " unsupported)";
    return out.str();
}

VerifyReport verify_program(const Program& p, const TaintConfig& cfg) {
    return Verifier(p, cfg).run();
}

} // namespace tg
