#pragma once

#include "tg/config.hpp"
#include "tg/gasm.hpp"

#include <set>
#include <string>
#include <vector>

namespace tg {

/// One statement of the pseudo-source rendering. Conditionals and loops
/// carry their sub-statements; everything else is a flat line. `uses` and
/// `defs` track variable names (varN) and static keys (Cls.field) so that a
/// statement-level slice can be computed over the tree.
struct PseudoStmt {
    enum class Kind { Assign, StaticStore, FieldStore, Call, Expr, If, While, Return, Throw };
    Kind kind = Kind::Expr;
    std::string target; // Assign: varN; StaticStore: Cls.field; FieldStore: recv.field
    std::string expr;   // rhs, call text, condition, returned or thrown value
    std::vector<PseudoStmt> body;   // If / While
    std::vector<PseudoStmt> orelse; // If
    std::set<std::string> uses;
    std::set<std::string> defs;
    std::set<std::string> callees; // keys of bodied methods this line invokes
    bool has_source = false;
    bool has_sink = false;
};

struct PseudoFunc {
    std::string name;
    std::vector<std::string> param_classes; // by parameter slot
    std::vector<PseudoStmt> body;
};

/// Decompiles one method into a statement tree: expressions are folded back
/// together, conditional jumps become if/else, and both loop layouts (the
/// original top-tested form and the rotated form the gadget builder emits)
/// come back as while loops with the re-test folded away.
PseudoFunc build_pseudo(const Program& p, const TaintConfig& cfg,
                        const MethodId& method, const std::string& fn_name);

/// Canonical text for a statement tree. Source and sink calls carry a
/// trailing marker comment.
std::string pseudo_text(const PseudoFunc& f);

/// Tokens of a pseudo rendering, comments and whitespace dropped. Literals
/// and identifiers count as one token each; two-character operators too.
std::vector<std::string> lex_pseudo(const std::string& text);

/// Validates `text` against the pseudo grammar (throws std::runtime_error
/// with a message on violation). Every pseudo_text output must pass.
void check_pseudo(const std::string& text);

} // namespace tg
