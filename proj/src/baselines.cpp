#include "tg/baselines.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>

namespace tg {

namespace {

MethodId parse_key(const std::string& key) {
    size_t slash = key.rfind('/');
    size_t dot = key.rfind('.', slash);
    if (slash == std::string::npos || dot == std::string::npos)
        throw std::runtime_error("malformed method key " + key);
    return {key.substr(0, dot), key.substr(dot + 1, slash - dot - 1),
            std::stoi(key.substr(slash + 1))};
}

void collect_callees(const PseudoStmt& s, std::set<std::string>& out) {
    out.insert(s.callees.begin(), s.callees.end());
    for (const PseudoStmt& c : s.body) collect_callees(c, out);
    for (const PseudoStmt& c : s.orelse) collect_callees(c, out);
}

/// Pseudo renderings of every bodied method reachable from `entry`,
/// breadth-first, entry first. The map key is the method key.
std::vector<std::pair<std::string, PseudoFunc>> reachable_pseudo(const Program& p,
                                                                 const TaintConfig& cfg,
                                                                 const MethodId& entry) {
    std::vector<std::pair<std::string, PseudoFunc>> out;
    std::set<std::string> seen{entry.key()};
    std::deque<MethodId> work{entry};
    while (!work.empty()) {
        MethodId id = work.front();
        work.pop_front();
        PseudoFunc f = build_pseudo(p, cfg, id, id.name);
        std::set<std::string> callees;
        for (const PseudoStmt& s : f.body) collect_callees(s, callees);
        out.emplace_back(id.key(), std::move(f));
        for (const std::string& key : callees)
            if (seen.insert(key).second) work.push_back(parse_key(key));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statement-level backward slicing over one statement tree
// ---------------------------------------------------------------------------

bool intersects(const std::set<std::string>& a, const std::set<std::string>& b) {
    for (const std::string& x : a)
        if (b.count(x)) return true;
    return false;
}

struct Slicer {
    std::set<const PseudoStmt*> seeds;
    std::set<const PseudoStmt*> keep;

    /// One backward pass over a statement list. `needed` holds the names the
    /// slice still has to explain when control reaches the top of the list.
    /// Returns true when anything in the list (or below it) was kept.
    bool sweep(const std::vector<PseudoStmt>& stmts, std::set<std::string>& needed) {
        bool any = false;
        for (auto it = stmts.rbegin(); it != stmts.rend(); ++it) {
            const PseudoStmt& s = *it;
            switch (s.kind) {
                case PseudoStmt::Kind::If: {
                    std::set<std::string> then_needed = needed, else_needed = needed;
                    bool kt = sweep(s.body, then_needed);
                    bool ke = sweep(s.orelse, else_needed);
                    needed = then_needed;
                    needed.insert(else_needed.begin(), else_needed.end());
                    if (kt || ke || seeds.count(&s)) {
                        keep.insert(&s);
                        needed.insert(s.uses.begin(), s.uses.end());
                        any = true;
                    }
                    break;
                }
                case PseudoStmt::Kind::While: {
                    // Values flow across iterations, so sweep the body until
                    // the needed set stops growing.
                    bool kept = seeds.count(&s) > 0;
                    for (;;) {
                        std::set<std::string> body_needed = needed;
                        if (sweep(s.body, body_needed)) kept = true;
                        size_t before = needed.size();
                        needed.insert(body_needed.begin(), body_needed.end());
                        if (kept) needed.insert(s.uses.begin(), s.uses.end());
                        if (needed.size() == before) break;
                    }
                    if (kept) {
                        keep.insert(&s);
                        any = true;
                    }
                    break;
                }
                default: {
                    bool wanted = seeds.count(&s) > 0 || intersects(s.defs, needed);
                    if (!wanted) break;
                    keep.insert(&s);
                    for (const std::string& d : s.defs) needed.erase(d);
                    needed.insert(s.uses.begin(), s.uses.end());
                    any = true;
                    break;
                }
            }
        }
        return any;
    }

    std::vector<PseudoStmt> filter(const std::vector<PseudoStmt>& stmts) const {
        std::vector<PseudoStmt> out;
        for (const PseudoStmt& s : stmts) {
            if (!keep.count(&s)) continue;
            PseudoStmt copy = s;
            copy.body = filter(s.body);
            copy.orelse = filter(s.orelse);
            out.push_back(std::move(copy));
        }
        return out;
    }
};

void collect_sinks(const PseudoStmt& s, std::vector<const PseudoStmt*>& out) {
    // A compound statement is a site only through its own condition; sinks
    // inside its arms are sites of their own.
    if (s.kind == PseudoStmt::Kind::If || s.kind == PseudoStmt::Kind::While) {
        for (const PseudoStmt& c : s.body) collect_sinks(c, out);
        for (const PseudoStmt& c : s.orelse) collect_sinks(c, out);
        return;
    }
    if (s.has_sink) out.push_back(&s);
}

} // namespace

std::vector<PseudoFunc> function_baseline(const Program& p, const TaintConfig& cfg,
                                          const MethodId& endpoint) {
    std::vector<PseudoFunc> out;
    for (auto& [key, f] : reachable_pseudo(p, cfg, endpoint)) out.push_back(std::move(f));
    return out;
}

std::vector<SiteSlice> code_gadget_baseline(const Program& p, const TaintConfig& cfg,
                                            const MethodId& endpoint) {
    auto funcs = reachable_pseudo(p, cfg, endpoint);

    // Callers of each method, for walking a site back to the endpoint.
    std::map<std::string, std::set<std::string>> callers;
    for (const auto& [key, f] : funcs) {
        std::set<std::string> callees;
        for (const PseudoStmt& s : f.body) collect_callees(s, callees);
        for (const std::string& c : callees) callers[c].insert(key);
    }

    std::vector<SiteSlice> out;
    for (const auto& [site_key, site_func] : funcs) {
        std::vector<const PseudoStmt*> sinks;
        for (const PseudoStmt& s : site_func.body) collect_sinks(s, sinks);
        for (const PseudoStmt* sink : sinks) {
            SiteSlice slice;
            slice.method_key = site_key;

            // Methods to slice: the sink's own, then every caller up to the
            // endpoint. In the sink method the seed is the sink statement; in
            // a caller it is every call into an already-sliced method.
            std::set<std::string> in_chain{site_key};
            std::deque<std::string> work{site_key};
            while (!work.empty()) {
                std::string key = work.front();
                work.pop_front();
                for (const std::string& c : callers[key])
                    if (in_chain.insert(c).second) work.push_back(c);
            }

            for (const auto& [key, f] : funcs) {
                if (!in_chain.count(key)) continue;
                Slicer sl;
                if (key == site_key) {
                    sl.seeds = {sink};
                } else {
                    // Seed on every statement that calls down the chain.
                    std::deque<const PseudoStmt*> q;
                    for (const PseudoStmt& s : f.body) q.push_back(&s);
                    while (!q.empty()) {
                        const PseudoStmt* s = q.front();
                        q.pop_front();
                        if (intersects(s->callees, in_chain)) sl.seeds.insert(s);
                        for (const PseudoStmt& c : s->body) q.push_back(&c);
                        for (const PseudoStmt& c : s->orelse) q.push_back(&c);
                    }
                }
                std::set<std::string> needed;
                sl.sweep(f.body, needed);
                PseudoFunc sliced;
                sliced.name = f.name;
                sliced.param_classes = f.param_classes;
                sliced.body = sl.filter(f.body);
                slice.funcs.push_back(std::move(sliced));
            }
            out.push_back(std::move(slice));
        }
    }
    return out;
}

int token_count(const PseudoFunc& f) {
    return static_cast<int>(lex_pseudo(pseudo_text(f)).size());
}

int token_count(const std::vector<PseudoFunc>& fs) {
    int n = 0;
    for (const PseudoFunc& f : fs) n += token_count(f);
    return n;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

double ProgramStats::reduction() const { return cg_tokens == 0.0 ? 0.0 : 1.0 - tg_tokens / cg_tokens; }

ProgramStats program_stats(const std::string& name, const Program& p, const TaintConfig& cfg) {
    ProgramStats st;
    st.program = name;
    PipelineResult pr = run_pipeline(p, cfg);

    std::vector<double> tg, cg, fn;
    for (const EndpointResult& er : pr.endpoints) {
        for (const std::string& text : er.pseudo)
            tg.push_back(static_cast<double>(lex_pseudo(text).size()));
        for (const SiteSlice& s : code_gadget_baseline(p, cfg, er.endpoint))
            cg.push_back(static_cast<double>(token_count(s.funcs)));
        fn.push_back(static_cast<double>(token_count(function_baseline(p, cfg, er.endpoint))));
    }
    st.gadget_count = static_cast<int>(tg.size());
    st.site_count = static_cast<int>(cg.size());
    st.tg_tokens = median(tg);
    st.cg_tokens = median(cg);
    st.fn_tokens = median(fn);
    return st;
}

AggregateStats aggregate_stats(std::vector<ProgramStats> programs) {
    AggregateStats agg;
    std::vector<double> reductions;
    for (const ProgramStats& st : programs) reductions.push_back(st.reduction());
    agg.median_reduction = median(std::move(reductions));
    agg.programs = std::move(programs);
    return agg;
}

} // namespace tg
