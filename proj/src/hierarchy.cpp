#include "tg/hierarchy.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <regex>
#include <stdexcept>

namespace tg {

namespace {
const std::set<std::string> kNoChildren;
} // namespace

ClassHierarchy::ClassHierarchy(const Program& p) {
    for (const auto& [name, cls] : p.classes) {
        if (cls.superclass) {
            children_[*cls.superclass].insert(name);
            supers_[name].push_back(*cls.superclass);
        }
        for (const auto& itf : cls.interfaces) {
            children_[itf].insert(name);
            supers_[name].push_back(itf);
        }
    }
}

const std::set<std::string>& ClassHierarchy::children_of(const std::string& cls) const {
    auto it = children_.find(cls);
    return it == children_.end() ? kNoChildren : it->second;
}

std::set<std::string> ClassHierarchy::subtypes_of(const std::string& cls) const {
    std::set<std::string> out;
    std::deque<std::string> work{cls};
    while (!work.empty()) {
        std::string cur = work.front();
        work.pop_front();
        for (const auto& child : children_of(cur))
            if (out.insert(child).second) work.push_back(child);
    }
    out.erase(cls);
    return out;
}

bool ClassHierarchy::is_subtype(const std::string& sub, const std::string& super) const {
    if (sub == super) return true;
    std::deque<std::string> work{sub};
    std::set<std::string> seen{sub};
    while (!work.empty()) {
        std::string cur = work.front();
        work.pop_front();
        auto it = supers_.find(cur);
        if (it == supers_.end()) continue;
        for (const auto& s : it->second) {
            if (s == super) return true;
            if (seen.insert(s).second) work.push_back(s);
        }
    }
    return false;
}

std::vector<MethodId> identify_endpoints(const Program& p, const TaintConfig& cfg) {
    std::regex pattern(cfg.entry_pattern);
    std::vector<MethodId> out;
    for (const auto& [cname, cls] : p.classes) {
        if (cls.is_extern) continue;
        for (const auto& [sig, m] : cls.methods) {
            if (m.is_extern || m.param_classes.empty()) continue;
            const std::string& first = m.param_classes.begin()->second;
            if (std::regex_search(first, pattern)) out.push_back({cname, m.name, m.arity});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct GraphBuilder {
    const Program& p;
    const ClassHierarchy& hier;
    CallMode mode;

    /// Walk-up resolution from `cls`; returns the defining class or empty.
    const MethodDef* resolveFrom(const std::string& cls, const std::string& name, int arity,
                                 std::string* defining) const {
        MethodRef ref{cls, name, arity};
        return p.resolve_method(ref, defining);
    }

    /// Candidate bodied targets of a virtual/interface site given the
    /// receiver-class universe (all declared subtypes under Cha,
    /// instantiated classes under ZeroCfa).
    std::set<MethodId> virtualTargets(const MethodRef& ref,
                                      const std::set<std::string>& universe) const {
        std::set<MethodId> out;
        for (const auto& recv : universe) {
            if (!hier.is_subtype(recv, ref.cls)) continue;
            std::string defining;
            const MethodDef* m = resolveFrom(recv, ref.name, ref.arity, &defining);
            if (m && !m->is_extern) out.insert({defining, ref.name, ref.arity});
        }
        return out;
    }

    /// True when some declared class can answer the call at all (bodied or
    /// extern); used for undeclared-target diagnostics independent of mode.
    bool declaredSomewhere(const MethodRef& ref) const {
        if (p.resolve_method(ref)) return true;
        for (const auto& sub : hier.subtypes_of(ref.cls))
            if (resolveFrom(sub, ref.name, ref.arity, nullptr)) return true;
        return false;
    }

    /// Static initializers triggered by touching `cls`: every <clinit>/0 on
    /// the extends chain starting at `cls` (outermost first).
    std::vector<MethodId> clinitChain(const std::string& cls) const {
        std::vector<MethodId> chain;
        std::set<std::string> seen;
        for (const ClassDef* c = p.find_class(cls); c && seen.insert(c->name).second;
             c = c->superclass ? p.find_class(*c->superclass) : nullptr) {
            const MethodDef* init = c->find_method("<clinit>", 0);
            if (init && !init->is_extern) chain.push_back({c->name, "<clinit>", 0});
        }
        std::reverse(chain.begin(), chain.end());
        return chain;
    }

    CallGraph buildOnce(const std::vector<MethodId>& roots,
                        const std::set<std::string>& instantiated) const {
        CallGraph g;
        g.mode = mode;
        g.instantiated = instantiated;
        std::deque<MethodId> work;
        auto enqueue = [&](const MethodId& id) {
            if (g.reachable.insert(id).second) work.push_back(id);
        };
        for (const auto& r : roots) enqueue(r);

        std::set<std::string> reportedErrors;
        auto error = [&](const std::string& msg) {
            if (reportedErrors.insert(msg).second) g.errors.push_back(msg);
        };

        while (!work.empty()) {
            MethodId cur = work.front();
            work.pop_front();
            const ClassDef* cls = p.find_class(cur.cls);
            if (!cls) continue;
            const MethodDef* m = cls->find_method(cur.name, cur.arity);
            if (!m || m->is_extern) continue;

            for (int i = 0; i < static_cast<int>(m->body.size()); ++i) {
                const Instruction& ins = m->body[i];
                std::string touched; // class whose initializer may trigger
                switch (ins.op) {
                    case Op::InvokeStatic: {
                        touched = ins.mref.cls;
                        std::string defining;
                        const MethodDef* callee =
                            resolveFrom(ins.mref.cls, ins.mref.name, ins.mref.arity, &defining);
                        CallSite site{cur, i, ins.mref};
                        if (!callee) {
                            error("call to undeclared method '" + ins.mref.key() + "' from " +
                                  cur.key());
                            g.edges[site]; // keep the site visible
                        } else if (callee->is_extern) {
                            g.edges[site];
                        } else {
                            MethodId target{defining, ins.mref.name, ins.mref.arity};
                            g.edges[site].insert(target);
                            enqueue(target);
                        }
                        break;
                    }
                    case Op::InvokeVirtual:
                    case Op::InvokeInterface: {
                        CallSite site{cur, i, ins.mref};
                        if (!declaredSomewhere(ins.mref))
                            error("call to undeclared method '" + ins.mref.key() + "' from " +
                                  cur.key());
                        std::set<MethodId> targets = virtualTargets(ins.mref, instantiated);
                        g.edges[site] = targets;
                        for (const auto& t : targets) enqueue(t);
                        break;
                    }
                    case Op::New:
                        touched = ins.cls;
                        break;
                    case Op::GetStatic:
                    case Op::PutStatic:
                        touched = ins.fref.cls;
                        break;
                    default:
                        break;
                }
                if (!touched.empty()) {
                    for (const auto& init : clinitChain(touched)) {
                        CallSite site{cur, i, init.ref()};
                        g.edges[site].insert(init);
                        enqueue(init);
                    }
                }
            }
        }
        return g;
    }
};

std::set<std::string> allClassNames(const Program& p) {
    std::set<std::string> out;
    for (const auto& [name, cls] : p.classes) out.insert(name);
    return out;
}

std::set<std::string> rootParamClasses(const Program& p, const std::vector<MethodId>& roots) {
    std::set<std::string> out;
    for (const auto& r : roots) {
        const ClassDef* cls = p.find_class(r.cls);
        if (!cls) continue;
        const MethodDef* m = cls->find_method(r.name, r.arity);
        if (!m) continue;
        for (const auto& [slot, pc] : m->param_classes) out.insert(pc);
    }
    return out;
}

std::set<std::string> newedClasses(const Program& p, const std::set<MethodId>& methods) {
    std::set<std::string> out;
    for (const auto& id : methods) {
        const ClassDef* cls = p.find_class(id.cls);
        if (!cls) continue;
        const MethodDef* m = cls->find_method(id.name, id.arity);
        if (!m || m->is_extern) continue;
        for (const auto& ins : m->body)
            if (ins.op == Op::New) out.insert(ins.cls);
    }
    return out;
}

} // namespace

CallGraph build_callgraph(const Program& p, const TaintConfig& cfg,
                          const std::vector<MethodId>& roots, CallMode mode) {
    (void)cfg;
    ClassHierarchy hier(p);
    GraphBuilder builder{p, hier, mode};

    if (mode == CallMode::Cha) return builder.buildOnce(roots, allClassNames(p));

    // Instantiation-aware: iterate until the instantiated set is stable.
    std::set<std::string> instantiated = rootParamClasses(p, roots);
    for (;;) {
        CallGraph g = builder.buildOnce(roots, instantiated);
        std::set<std::string> next = instantiated;
        for (const auto& c : newedClasses(p, g.reachable)) next.insert(c);
        if (next == instantiated) return g;
        instantiated = std::move(next);
    }
}

Scope global_slice(const Program& p, const TaintConfig& cfg, const MethodId& endpoint,
                   CallMode mode) {
    CallGraph g = build_callgraph(p, cfg, {endpoint}, mode);

    // Methods containing an in-reach sink call site, then backward closure
    // over call edges.
    std::set<MethodId> backward;
    for (const auto& [site, targets] : g.edges)
        if (cfg.is_sink(site.ref.key())) backward.insert(site.caller);
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& [site, targets] : g.edges) {
            if (backward.count(site.caller)) continue;
            for (const auto& t : targets)
                if (backward.count(t)) {
                    backward.insert(site.caller);
                    changed = true;
                    break;
                }
        }
    }

    Scope scope;
    for (const auto& m : g.reachable)
        if (backward.count(m)) scope.methods.insert(m);

    // Pull in static initializers of classes the sliced methods touch; the
    // initializers run during emulation even when they never reach the sink.
    ClassHierarchy hier(p);
    GraphBuilder builder{p, hier, mode};
    for (bool changed = true; changed;) {
        changed = false;
        std::set<std::string> touched;
        for (const auto& id : scope.methods) {
            const ClassDef* cls = p.find_class(id.cls);
            if (!cls) continue;
            const MethodDef* m = cls->find_method(id.name, id.arity);
            if (!m || m->is_extern) continue;
            for (const auto& ins : m->body) {
                switch (ins.op) {
                    case Op::InvokeStatic: touched.insert(ins.mref.cls); break;
                    case Op::New: touched.insert(ins.cls); break;
                    case Op::GetStatic:
                    case Op::PutStatic: touched.insert(ins.fref.cls); break;
                    default: break;
                }
            }
        }
        for (const auto& cls : touched)
            for (const auto& init : builder.clinitChain(cls))
                if (scope.methods.insert(init).second) changed = true;
    }

    for (const auto& [site, targets] : g.edges)
        if (cfg.is_sink(site.ref.key()) && scope.contains(site.caller))
            scope.sink_sites.push_back(site);
    return scope;
}

std::string infer_scope_namespace(const Program& p, const TaintConfig& cfg,
                                  const MethodId& endpoint, uint64_t seed, int walks,
                                  int depth) {
    if (walks < 1) throw std::invalid_argument("walks must be positive");
    const ClassDef* cls = p.find_class(endpoint.cls);
    if (!cls || !cls->find_method(endpoint.name, endpoint.arity))
        throw std::invalid_argument("unknown endpoint " + endpoint.key());

    CallGraph g = build_callgraph(p, cfg, {endpoint}, CallMode::Cha);
    // Successor lists per method, deterministic order.
    std::map<MethodId, std::vector<MethodId>> succ;
    for (const auto& [site, targets] : g.edges) {
        auto& list = succ[site.caller];
        for (const auto& t : targets) list.push_back(t);
    }

    std::mt19937 rng(static_cast<uint32_t>(seed));
    std::map<std::string, double> score;
    auto credit = [&](const std::string& name, int step) {
        for (size_t pos = name.find('.'); pos != std::string::npos; pos = name.find('.', pos + 1))
            score[name.substr(0, pos)] += 1.0 / (1.0 + step);
    };

    for (int w = 0; w < walks; ++w) {
        MethodId cur = endpoint;
        credit(cur.cls, 0);
        for (int step = 1; step <= depth; ++step) {
            auto it = succ.find(cur);
            if (it == succ.end() || it->second.empty()) break;
            cur = it->second[rng() % it->second.size()];
            credit(cur.cls, step);
        }
    }

    std::string best;
    double bestScore = -1.0;
    for (const auto& [prefix, s] : score)
        if (s > bestScore) {
            best = prefix;
            bestScore = s;
        }
    return best;
}

} // namespace tg
