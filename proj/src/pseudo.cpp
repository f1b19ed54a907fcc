#include "tg/pseudo.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include "tg/printer.hpp"

namespace tg {
namespace {

// ---------------------------------------------------------------------------
// Statement-tree builder
// ---------------------------------------------------------------------------

/// A value on the simulated expression stack, carried as text. Comparison
/// results keep their operands so conditions can be flipped when a jump
/// inverts them.
struct Expr {
    std::string text;
    enum class Tag { Int, Str, Ref, Cmp } tag = Tag::Ref;
    Op cmp = Op::CmpEq;
    std::string lhs, rhs;
    bool has_source = false;
    bool has_sink = false;
    bool has_call = false;
    std::set<std::string> uses;
    std::set<std::string> callees; // bodied methods invoked inside this value
};

std::string cmp_text(const Expr& e, bool positive) {
    const char* op = "==";
    switch (e.cmp) {
        case Op::CmpEq: op = positive ? "==" : "!="; break;
        case Op::CmpNe: op = positive ? "!=" : "=="; break;
        case Op::CmpLt: op = positive ? "<" : ">="; break;
        default: break;
    }
    return e.lhs + " " + op + " " + e.rhs;
}

/// Renders a stack value as a condition. Comparisons flip their operator
/// under negation; other values are spelled out against null or zero
/// depending on what the expression can produce.
std::string cond_text(const Expr& e, bool positive) {
    if (e.tag == Expr::Tag::Cmp) return cmp_text(e, positive);
    if (e.tag == Expr::Tag::Int) return e.text + (positive ? " != 0" : " == 0");
    return e.text + (positive ? " != null" : " == null");
}

struct Builder {
    const Program& p;
    const TaintConfig& cfg;
    const MethodDef& def;
    std::vector<Expr> stack;
    int next_tmp = 0;

    Builder(const Program& p_, const TaintConfig& cfg_, const MethodDef& def_)
        : p(p_), cfg(cfg_), def(def_) {
        next_tmp = def.arity;
        for (const auto& ins : def.body)
            if (ins.op == Op::Load || ins.op == Op::Store)
                next_tmp = std::max(next_tmp, ins.slot + 1);
    }

    Expr pop() {
        if (stack.empty()) throw std::runtime_error("pseudo rendering: expression stack underflow");
        Expr e = std::move(stack.back());
        stack.pop_back();
        return e;
    }

    static void fold(Expr& dst, const Expr& src) {
        dst.has_source = dst.has_source || src.has_source;
        dst.has_sink = dst.has_sink || src.has_sink;
        dst.has_call = dst.has_call || src.has_call;
        dst.uses.insert(src.uses.begin(), src.uses.end());
        dst.callees.insert(src.callees.begin(), src.callees.end());
    }

    static void attach(PseudoStmt& s, const Expr& e) {
        s.has_source = s.has_source || e.has_source;
        s.has_sink = s.has_sink || e.has_sink;
        s.uses.insert(e.uses.begin(), e.uses.end());
        s.callees.insert(e.callees.begin(), e.callees.end());
    }

    void binary(const char* op, Expr::Tag tag) {
        Expr b = pop();
        Expr a = pop();
        Expr e;
        e.text = "(" + a.text + " " + op + " " + b.text + ")";
        e.tag = tag;
        fold(e, a);
        fold(e, b);
        stack.push_back(std::move(e));
    }

    void compare(Op op) {
        Expr b = pop();
        Expr a = pop();
        Expr e;
        e.tag = Expr::Tag::Cmp;
        e.cmp = op;
        e.lhs = a.text;
        e.rhs = b.text;
        fold(e, a);
        fold(e, b);
        e.text = "(" + cmp_text(e, true) + ")";
        stack.push_back(std::move(e));
    }

    std::string fresh_var() { return "var" + std::to_string(next_tmp++); }

    static std::string plain_name(const std::string& name) {
        // <init> / <clinit> would not survive the lexer; strip the brackets.
        if (name.size() > 2 && name.front() == '<' && name.back() == '>')
            return name.substr(1, name.size() - 2);
        return name;
    }

    /// True when `cls` names `wanted` or one of its subtypes.
    bool is_subtype(const std::string& cls, const std::string& wanted) const {
        if (cls == wanted) return true;
        const ClassDef* c = p.find_class(cls);
        if (!c) return false;
        for (const auto& i : c->interfaces)
            if (is_subtype(i, wanted)) return true;
        if (c->superclass) return is_subtype(*c->superclass, wanted);
        return false;
    }

    void invoke(const Instruction& ins, std::vector<PseudoStmt>& out) {
        int arity = ins.mref.arity;
        std::vector<Expr> args(arity);
        for (int i = arity - 1; i >= 0; --i) args[i] = pop();

        std::string defining;
        const MethodDef* target = p.resolve_method(ins.mref, &defining);
        std::string key =
            target ? MethodId{defining, ins.mref.name, ins.mref.arity}.key() : ins.mref.key();
        TaintConfig::Role role = cfg.role_of(key);
        if (role == TaintConfig::Role::Unknown && key != ins.mref.key()) {
            role = cfg.role_of(ins.mref.key());
            if (role != TaintConfig::Role::Unknown) key = ins.mref.key();
        }

        bool returns = false;
        if (target && !target->is_extern) {
            returns = target->returns_value();
        } else {
            switch (role) {
                case TaintConfig::Role::Source:
                case TaintConfig::Role::Sanitizer: returns = true; break;
                case TaintConfig::Role::Sink: returns = false; break;
                case TaintConfig::Role::Extern: returns = cfg.extern_returns_value(key); break;
                case TaintConfig::Role::Unknown:
                    // Extern declaration without configured semantics: look for a
                    // bodied implementation below the declared class.
                    for (const auto& [cn, cd] : p.classes) {
                        if (cd.is_extern) continue;
                        const MethodDef* m = cd.find_method(ins.mref.name, ins.mref.arity);
                        if (m && !m->is_extern && is_subtype(cn, ins.mref.cls)) {
                            returns = m->returns_value();
                            break;
                        }
                    }
                    break;
            }
        }

        Expr e;
        e.tag = Expr::Tag::Ref;
        e.has_call = true;
        if (target && !target->is_extern) e.callees.insert(key);
        std::string name = plain_name(ins.mref.name);
        std::string text;
        size_t first = 0;
        if (ins.op == Op::InvokeStatic) {
            text = ins.mref.cls + "." + name + "(";
        } else {
            if (args.empty()) throw std::runtime_error("pseudo rendering: missing receiver");
            text = args[0].text + "." + name + "(";
            fold(e, args[0]);
            first = 1;
        }
        for (size_t i = first; i < args.size(); ++i) {
            if (i > first) text += ", ";
            text += args[i].text;
            fold(e, args[i]);
        }
        text += ")";
        e.text = std::move(text);
        if (role == TaintConfig::Role::Source) e.has_source = true;
        if (role == TaintConfig::Role::Sink) e.has_sink = true;

        if (returns) {
            stack.push_back(std::move(e));
        } else {
            PseudoStmt s;
            s.kind = PseudoStmt::Kind::Call;
            s.expr = e.text;
            attach(s, e);
            out.push_back(std::move(s));
        }
    }

    void step(const Instruction& ins, std::vector<PseudoStmt>& out) {
        switch (ins.op) {
            case Op::ConstInt: {
                Expr e;
                e.text = std::to_string(ins.int_val);
                e.tag = Expr::Tag::Int;
                stack.push_back(std::move(e));
                break;
            }
            case Op::ConstStr: {
                Expr e;
                e.text = quote_gasm_string(ins.str_val);
                e.tag = Expr::Tag::Str;
                stack.push_back(std::move(e));
                break;
            }
            case Op::ConstNull: {
                Expr e;
                e.text = "null";
                stack.push_back(std::move(e));
                break;
            }
            case Op::Load: {
                Expr e;
                e.text = "var" + std::to_string(ins.slot);
                e.uses = {e.text};
                stack.push_back(std::move(e));
                break;
            }
            case Op::Store: {
                Expr v = pop();
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::Assign;
                s.target = "var" + std::to_string(ins.slot);
                s.expr = v.text;
                s.defs = {s.target};
                attach(s, v);
                out.push_back(std::move(s));
                break;
            }
            case Op::Add: binary("+", Expr::Tag::Int); break;
            case Op::Sub: binary("-", Expr::Tag::Int); break;
            case Op::Mul: binary("*", Expr::Tag::Int); break;
            case Op::Concat: binary("+", Expr::Tag::Str); break;
            case Op::CmpEq:
            case Op::CmpNe:
            case Op::CmpLt: compare(ins.op); break;
            case Op::Dup: {
                Expr e = pop();
                if (e.has_call) {
                    // Keep single evaluation: materialize into a fresh variable.
                    std::string v = fresh_var();
                    PseudoStmt s;
                    s.kind = PseudoStmt::Kind::Assign;
                    s.target = v;
                    s.expr = e.text;
                    s.defs = {v};
                    attach(s, e);
                    out.push_back(std::move(s));
                    Expr ve;
                    ve.text = v;
                    ve.tag = e.tag;
                    ve.uses = {v};
                    stack.push_back(ve);
                    stack.push_back(std::move(ve));
                } else {
                    stack.push_back(e);
                    stack.push_back(std::move(e));
                }
                break;
            }
            case Op::Pop: {
                Expr e = pop();
                if (e.has_call) {
                    PseudoStmt s;
                    s.kind = PseudoStmt::Kind::Expr;
                    s.expr = e.text;
                    attach(s, e);
                    out.push_back(std::move(s));
                }
                break;
            }
            case Op::Swap: {
                Expr b = pop();
                Expr a = pop();
                stack.push_back(std::move(b));
                stack.push_back(std::move(a));
                break;
            }
            case Op::New: {
                Expr e;
                e.text = "new " + ins.cls + "()";
                stack.push_back(std::move(e));
                break;
            }
            case Op::GetField: {
                Expr r = pop();
                Expr e;
                e.text = r.text + "." + ins.fref.name;
                fold(e, r);
                e.uses.insert("." + ins.fref.name);
                stack.push_back(std::move(e));
                break;
            }
            case Op::PutField: {
                Expr v = pop();
                Expr r = pop();
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::FieldStore;
                s.target = r.text + "." + ins.fref.name;
                s.expr = v.text;
                s.defs = {"." + ins.fref.name};
                attach(s, r);
                attach(s, v);
                out.push_back(std::move(s));
                break;
            }
            case Op::GetStatic: {
                Expr e;
                e.text = ins.fref.key();
                e.uses = {e.text};
                stack.push_back(std::move(e));
                break;
            }
            case Op::PutStatic: {
                Expr v = pop();
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::StaticStore;
                s.target = ins.fref.key();
                s.expr = v.text;
                s.defs = {s.target};
                attach(s, v);
                out.push_back(std::move(s));
                break;
            }
            case Op::InvokeStatic:
            case Op::InvokeVirtual:
            case Op::InvokeInterface: invoke(ins, out); break;
            case Op::Return: {
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::Return;
                out.push_back(std::move(s));
                break;
            }
            case Op::ReturnVal: {
                Expr v = pop();
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::Return;
                s.expr = v.text;
                attach(s, v);
                out.push_back(std::move(s));
                break;
            }
            case Op::Throw: {
                Expr v = pop();
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::Throw;
                s.expr = v.text;
                attach(s, v);
                out.push_back(std::move(s));
                break;
            }
            case Op::Ifz:
            case Op::Goto:
                throw std::runtime_error("pseudo rendering: jump outside a recognized shape");
        }
    }

    /// Renders the instruction range [lo, hi) as a statement list,
    /// reassembling structured conditionals and loops from the jump layout.
    std::vector<PseudoStmt> render_range(int lo, int hi) {
        std::vector<PseudoStmt> out;
        int i = lo;
        while (i < hi) {
            const Instruction& ins = def.body[i];
            if (ins.op == Op::Goto) {
                // Top-tested loop: `goto C; B: body; C: cond; ifz B`.
                int c = ins.target;
                int k = -1;
                for (int j = std::max(c, i + 1); j < hi; ++j) {
                    if (def.body[j].op == Op::Ifz && def.body[j].target == i + 1) {
                        k = j;
                        break;
                    }
                }
                if (c > i && k >= c) {
                    std::vector<PseudoStmt> none;
                    for (int j = c; j < k; ++j) step(def.body[j], none);
                    if (!none.empty())
                        throw std::runtime_error(
                            "pseudo rendering: loop condition is not a pure expression");
                    Expr cond = pop();
                    PseudoStmt s;
                    s.kind = PseudoStmt::Kind::While;
                    s.expr = cond_text(cond, false);
                    attach(s, cond);
                    s.body = render_range(i + 1, c);
                    out.push_back(std::move(s));
                    i = k + 1;
                    continue;
                }
                ++i; // stray forward goto: no statement
                continue;
            }
            if (ins.op == Op::Ifz) {
                if (ins.target <= i) {
                    pop(); // loop re-test; the while header already shows it
                    ++i;
                    continue;
                }
                int px = ins.target;
                // Guarded block: `ifz B; goto X; B: body; X:`. With a later
                // backward test on B this is a rotated loop.
                if (i + 1 < hi && def.body[i + 1].op == Op::Goto &&
                    def.body[i + 1].target > i + 1 && px == i + 2) {
                    int close = def.body[i + 1].target;
                    int k = -1;
                    for (int j = px; j < close && j < hi; ++j) {
                        if (def.body[j].op == Op::Ifz && def.body[j].target == px) {
                            k = j;
                            break;
                        }
                    }
                    Expr cond = pop();
                    PseudoStmt s;
                    s.expr = cond_text(cond, false);
                    attach(s, cond);
                    if (k >= 0) {
                        s.kind = PseudoStmt::Kind::While;
                        s.body = render_range(px, k);
                        pop(); // duplicated loop condition
                    } else {
                        s.kind = PseudoStmt::Kind::If;
                        s.body = render_range(px, close);
                    }
                    out.push_back(std::move(s));
                    i = close;
                    continue;
                }
                // Two arms: `ifz E; then; goto J; E: else; J:`.
                if (px - 1 > i && px - 1 < hi && def.body[px - 1].op == Op::Goto &&
                    def.body[px - 1].target >= px) {
                    int py = def.body[px - 1].target;
                    Expr cond = pop();
                    PseudoStmt s;
                    s.kind = PseudoStmt::Kind::If;
                    s.expr = cond_text(cond, true);
                    attach(s, cond);
                    s.body = render_range(i + 1, px - 1);
                    s.orelse = render_range(px, py);
                    out.push_back(std::move(s));
                    i = py;
                    continue;
                }
                // Plain then-shape: `ifz E; body; E:`.
                Expr cond = pop();
                PseudoStmt s;
                s.kind = PseudoStmt::Kind::If;
                s.expr = cond_text(cond, true);
                attach(s, cond);
                s.body = render_range(i + 1, px);
                out.push_back(std::move(s));
                i = px;
                continue;
            }
            step(ins, out);
            ++i;
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Text writer
// ---------------------------------------------------------------------------

void write_stmts(std::ostringstream& os, const std::vector<PseudoStmt>& stmts, int depth) {
    std::string ind(static_cast<size_t>(depth) * 2, ' ');
    for (const auto& s : stmts) {
        std::string marker;
        if (s.has_sink)
            marker = " // Sink";
        else if (s.has_source)
            marker = " // Source";
        switch (s.kind) {
            case PseudoStmt::Kind::Assign:
            case PseudoStmt::Kind::StaticStore:
            case PseudoStmt::Kind::FieldStore:
                os << ind << s.target << " = " << s.expr << ";" << marker << "\n";
                break;
            case PseudoStmt::Kind::Call:
            case PseudoStmt::Kind::Expr:
                os << ind << s.expr << ";" << marker << "\n";
                break;
            case PseudoStmt::Kind::Return:
                if (s.expr.empty())
                    os << ind << "return;" << marker << "\n";
                else
                    os << ind << "return " << s.expr << ";" << marker << "\n";
                break;
            case PseudoStmt::Kind::Throw:
                os << ind << "throw " << s.expr << ";" << marker << "\n";
                break;
            case PseudoStmt::Kind::If:
                os << ind << "if (" << s.expr << ") {" << marker << "\n";
                write_stmts(os, s.body, depth + 1);
                if (!s.orelse.empty()) {
                    os << ind << "} else {\n";
                    write_stmts(os, s.orelse, depth + 1);
                }
                os << ind << "}\n";
                break;
            case PseudoStmt::Kind::While:
                os << ind << "while (" << s.expr << ") {" << marker << "\n";
                write_stmts(os, s.body, depth + 1);
                os << ind << "}\n";
                break;
        }
    }
}

} // namespace

PseudoFunc build_pseudo(const Program& p, const TaintConfig& cfg, const MethodId& method,
                        const std::string& fn_name) {
    const ClassDef* c = p.find_class(method.cls);
    const MethodDef* m = c ? c->find_method(method.name, method.arity) : nullptr;
    if (!m) throw std::runtime_error("pseudo rendering: no such method " + method.key());

    Builder b(p, cfg, *m);
    PseudoFunc f;
    f.name = fn_name;
    for (int i = 0; i < m->arity; ++i) {
        auto it = m->param_classes.find(i);
        f.param_classes.push_back(it != m->param_classes.end() ? it->second : "Object");
    }
    f.body = b.render_range(0, static_cast<int>(m->body.size()));
    if (!b.stack.empty())
        throw std::runtime_error("pseudo rendering: unbalanced expression stack");
    if (!f.body.empty() && f.body.back().kind == PseudoStmt::Kind::Return &&
        f.body.back().expr.empty())
        f.body.pop_back();
    return f;
}

std::string pseudo_text(const PseudoFunc& f) {
    std::ostringstream os;
    os << "void " << f.name << "(";
    for (size_t i = 0; i < f.param_classes.size(); ++i) {
        if (i) os << ", ";
        os << f.param_classes[i] << " var" << i;
    }
    os << ") {\n";
    write_stmts(os, f.body, 1);
    os << "}\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

std::vector<std::string> lex_pseudo(const std::string& text) {
    std::vector<std::string> out;
    size_t i = 0, n = text.size();
    auto isid = [](char ch) {
        return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '$';
    };
    while (i < n) {
        char ch = text[i];
        if (std::isspace(static_cast<unsigned char>(ch))) {
            ++i;
            continue;
        }
        if (ch == '/' && i + 1 < n && text[i + 1] == '/') {
            while (i < n && text[i] != '\n') ++i;
            continue;
        }
        if (ch == '"') {
            size_t j = i + 1;
            while (j < n && text[j] != '"') {
                if (text[j] == '\\' && j + 1 < n) ++j;
                ++j;
            }
            if (j >= n) throw std::runtime_error("pseudo lexer: unterminated string literal");
            out.push_back(text.substr(i, j - i + 1));
            i = j + 1;
            continue;
        }
        if (isid(ch)) {
            size_t j = i;
            while (j < n && isid(text[j])) ++j;
            out.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        if ((ch == '=' || ch == '!' || ch == '<' || ch == '>') && i + 1 < n &&
            text[i + 1] == '=') {
            out.push_back(text.substr(i, 2));
            i += 2;
            continue;
        }
        static const std::string punct = "(){},;=+-*<>.";
        if (punct.find(ch) != std::string::npos) {
            out.push_back(std::string(1, ch));
            ++i;
            continue;
        }
        throw std::runtime_error(std::string("pseudo lexer: unexpected character '") + ch + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grammar checker
// ---------------------------------------------------------------------------

namespace {

bool is_keyword(const std::string& t) {
    return t == "void" || t == "if" || t == "else" || t == "while" || t == "return" ||
           t == "throw" || t == "new" || t == "null";
}

bool is_number(const std::string& t) {
    return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c));
    });
}

bool is_ident(const std::string& t) {
    if (t.empty() || is_keyword(t) || is_number(t)) return false;
    char c = t[0];
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

struct PseudoParser {
    std::vector<std::string> t;
    size_t i = 0;

    const std::string& peek() const {
        static const std::string eof = "<eof>";
        return i < t.size() ? t[i] : eof;
    }
    bool at(const std::string& s) const { return peek() == s; }
    bool accept(const std::string& s) {
        if (!at(s)) return false;
        ++i;
        return true;
    }
    void expect(const std::string& s) {
        if (!accept(s))
            throw std::runtime_error("pseudo grammar: expected '" + s + "', found '" + peek() +
                                     "'");
    }
    std::string ident() {
        if (!is_ident(peek()))
            throw std::runtime_error("pseudo grammar: expected identifier, found '" + peek() +
                                     "'");
        return t[i++];
    }

    void args() {
        if (at(")")) return;
        expr();
        while (accept(",")) expr();
    }

    void postfix() {
        ident();
        while (true) {
            if (accept(".")) {
                ident();
            } else if (accept("(")) {
                args();
                expect(")");
            } else {
                break;
            }
        }
    }

    void unary() {
        if (accept("(")) {
            expr();
            expect(")");
            return;
        }
        if (accept("-")) {
            if (!is_number(peek()))
                throw std::runtime_error("pseudo grammar: expected number after '-'");
            ++i;
            return;
        }
        if (accept("null")) return;
        if (accept("new")) {
            ident();
            expect("(");
            args();
            expect(")");
            return;
        }
        if (is_number(peek()) || (!peek().empty() && peek()[0] == '"')) {
            ++i;
            return;
        }
        postfix();
    }

    void expr() {
        unary();
        while (accept("+") || accept("-") || accept("*") || accept("==") || accept("!=") ||
               accept("<") || accept(">="))
            unary();
    }

    void block() {
        expect("{");
        while (!at("}")) stmt();
        expect("}");
    }

    void stmt() {
        if (accept("if")) {
            expect("(");
            expr();
            expect(")");
            block();
            if (accept("else")) block();
            return;
        }
        if (accept("while")) {
            expect("(");
            expr();
            expect(")");
            block();
            return;
        }
        if (accept("return")) {
            if (!at(";")) expr();
            expect(";");
            return;
        }
        if (accept("throw")) {
            expr();
            expect(";");
            return;
        }
        postfix();
        if (accept("=")) expr();
        expect(";");
    }

    void func() {
        expect("void");
        ident();
        expect("(");
        if (!at(")")) {
            ident();
            ident();
            while (accept(",")) {
                ident();
                ident();
            }
        }
        expect(")");
        block();
    }

    void run() {
        if (t.empty()) throw std::runtime_error("pseudo grammar: empty input");
        while (i < t.size()) func();
    }
};

} // namespace

void check_pseudo(const std::string& text) {
    PseudoParser ps;
    ps.t = lex_pseudo(text);
    ps.run();
}

} // namespace tg
