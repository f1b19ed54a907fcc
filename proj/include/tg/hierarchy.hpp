#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/gasm.hpp"

namespace tg {

/// Subtype relations extracted from extends / implements clauses.
class ClassHierarchy {
public:
    explicit ClassHierarchy(const Program& p);

    /// Direct subtypes (classes that extend or implement `cls`).
    const std::set<std::string>& children_of(const std::string& cls) const;

    /// All transitive subtypes of `cls`, excluding `cls` itself.
    std::set<std::string> subtypes_of(const std::string& cls) const;

    /// True when sub == super or super is reachable from sub via
    /// extends / implements edges.
    bool is_subtype(const std::string& sub, const std::string& super) const;

private:
    std::map<std::string, std::set<std::string>> children_;
    std::map<std::string, std::vector<std::string>> supers_;
};

/// Call-target resolution policy. Cha resolves a virtual site against every
/// declared subtype of the operand class; ZeroCfa restricts receivers to
/// classes instantiated in code reachable from the roots (endpoint parameter
/// classes count as instantiated).
enum class CallMode { Cha, ZeroCfa };

struct CallSite {
    MethodId caller;
    int index = 0;  // instruction index within the caller body
    MethodRef ref;  // operand as written

    bool operator==(const CallSite&) const = default;
    auto operator<=>(const CallSite&) const = default;
};

struct CallGraph {
    CallMode mode = CallMode::Cha;
    /// site -> bodied callee methods. Sites whose only resolution is extern
    /// map to the empty set. Static-initializer triggers appear as synthetic
    /// sites with ref name `<clinit>`.
    std::map<CallSite, std::set<MethodId>> edges;
    /// Bodied methods walked, including the roots and triggered <clinit>s.
    std::set<MethodId> reachable;
    /// Classes considered instantiated (all declared classes under Cha).
    std::set<std::string> instantiated;
    std::vector<std::string> errors; // e.g. calls to undeclared methods
};

/// Endpoints are non-extern methods whose lowest-numbered param annotation
/// names a class matching cfg.entry_pattern (regex search).
std::vector<MethodId> identify_endpoints(const Program& p, const TaintConfig& cfg);

CallGraph build_callgraph(const Program& p, const TaintConfig& cfg,
                          const std::vector<MethodId>& roots, CallMode mode);

/// Methods on some endpoint-to-sink path: the intersection of forward
/// reachability from the endpoint with backward reachability from sink call
/// sites, extended with the static initializers of classes those methods
/// touch (transitively). sink_sites lists in-scope sites whose operand key
/// is configured as a sink.
struct Scope {
    std::set<MethodId> methods;
    std::vector<CallSite> sink_sites;

    bool contains(const MethodId& m) const { return methods.count(m) > 0; }
};

Scope global_slice(const Program& p, const TaintConfig& cfg, const MethodId& endpoint,
                   CallMode mode);

/// Votes on dotted class-name prefixes with seeded random walks over the
/// call graph: every walk starts at the endpoint, follows uniformly random
/// call edges, and credits each visited class's proper prefixes with weight
/// 1/(1+step). Returns the best-scoring prefix, ties broken towards the
/// lexicographically smallest; empty string when no class name is dotted.
/// Throws std::invalid_argument for walks < 1 or an unknown endpoint.
std::string infer_scope_namespace(const Program& p, const TaintConfig& cfg,
                                  const MethodId& endpoint, uint64_t seed,
                                  int walks = 256, int depth = 8);

} // namespace tg
