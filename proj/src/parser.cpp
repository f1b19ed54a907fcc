#include "tg/parser.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace tg {
namespace {

struct Token {
    std::string text;
    int col = 0;
};

bool isIdentStart(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool isIdentChar(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' || c == '.';
}

// Splits one line into tokens. Identifiers may contain dots (package-style
// class names); `:` `,` are punctuation; `"…"` is a single string token kept
// with its quotes; `#` starts a comment unless inside a string.
std::vector<Token> tokenizeLine(const std::string& line, int lineNo) {
    std::vector<Token> out;
    size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (c == '#') break;
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        int col = static_cast<int>(i) + 1;
        if (c == '"') {
            std::string tok = "\"";
            ++i;
            bool closed = false;
            while (i < line.size()) {
                char d = line[i++];
                tok += d;
                if (d == '\\') {
                    if (i >= line.size()) throw ParseError("dangling escape in string", lineNo, col);
                    tok += line[i++];
                } else if (d == '"') {
                    closed = true;
                    break;
                }
            }
            if (!closed) throw ParseError("unterminated string literal", lineNo, col);
            out.push_back({tok, col});
            continue;
        }
        if (c == ':' || c == ',') {
            out.push_back({std::string(1, c), col});
            ++i;
            continue;
        }
        // everything else up to whitespace / punctuation
        std::string tok;
        while (i < line.size()) {
            char d = line[i];
            if (std::isspace(static_cast<unsigned char>(d)) || d == ':' || d == ',' || d == '#' ||
                d == '"')
                break;
            tok += d;
            ++i;
        }
        out.push_back({tok, col});
    }
    return out;
}

std::string decodeString(const std::string& quoted, int lineNo, int col) {
    std::string out;
    for (size_t i = 1; i + 1 < quoted.size(); ++i) {
        char c = quoted[i];
        if (c == '\\') {
            ++i;
            char e = quoted[i];
            switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: throw ParseError(std::string("unknown escape \\") + e, lineNo, col);
            }
        } else {
            out += c;
        }
    }
    return out;
}

bool validIdent(const std::string& s, bool allowDots) {
    if (s.empty() || !isIdentStart(s[0])) return false;
    for (char c : s) {
        if (c == '.' && !allowDots) return false;
        if (!isIdentChar(c)) return false;
    }
    if (s.front() == '.' || s.back() == '.') return false;
    return true;
}

// Method names may be <init> / <clinit>.
bool validMethodName(const std::string& s) {
    if (s.size() > 2 && s.front() == '<' && s.back() == '>')
        return validIdent(s.substr(1, s.size() - 2), false);
    return validIdent(s, false);
}

struct OpInfo {
    Op op;
    enum class Operand { None, Int, Str, Slot, Class, Field, Method, Label } operand;
};

const std::map<std::string, OpInfo>& opTable() {
    static const std::map<std::string, OpInfo> table = {
        {"const.int", {Op::ConstInt, OpInfo::Operand::Int}},
        {"const.str", {Op::ConstStr, OpInfo::Operand::Str}},
        {"const.null", {Op::ConstNull, OpInfo::Operand::None}},
        {"load", {Op::Load, OpInfo::Operand::Slot}},
        {"store", {Op::Store, OpInfo::Operand::Slot}},
        {"add", {Op::Add, OpInfo::Operand::None}},
        {"sub", {Op::Sub, OpInfo::Operand::None}},
        {"mul", {Op::Mul, OpInfo::Operand::None}},
        {"concat", {Op::Concat, OpInfo::Operand::None}},
        {"cmp.eq", {Op::CmpEq, OpInfo::Operand::None}},
        {"cmp.ne", {Op::CmpNe, OpInfo::Operand::None}},
        {"cmp.lt", {Op::CmpLt, OpInfo::Operand::None}},
        {"dup", {Op::Dup, OpInfo::Operand::None}},
        {"pop", {Op::Pop, OpInfo::Operand::None}},
        {"swap", {Op::Swap, OpInfo::Operand::None}},
        {"new", {Op::New, OpInfo::Operand::Class}},
        {"getfield", {Op::GetField, OpInfo::Operand::Field}},
        {"putfield", {Op::PutField, OpInfo::Operand::Field}},
        {"getstatic", {Op::GetStatic, OpInfo::Operand::Field}},
        {"putstatic", {Op::PutStatic, OpInfo::Operand::Field}},
        {"invoke.static", {Op::InvokeStatic, OpInfo::Operand::Method}},
        {"invoke.virtual", {Op::InvokeVirtual, OpInfo::Operand::Method}},
        {"invoke.interface", {Op::InvokeInterface, OpInfo::Operand::Method}},
        {"ifz", {Op::Ifz, OpInfo::Operand::Label}},
        {"goto", {Op::Goto, OpInfo::Operand::Label}},
        {"return", {Op::Return, OpInfo::Operand::None}},
        {"return.val", {Op::ReturnVal, OpInfo::Operand::None}},
        {"throw", {Op::Throw, OpInfo::Operand::None}},
    };
    return table;
}

class Parser {
public:
    explicit Parser(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) lines_.push_back(line);
    }

    Program run() {
        Program p;
        for (lineNo_ = 1; lineNo_ <= static_cast<int>(lines_.size()); ++lineNo_) {
            auto toks = tokenizeLine(lines_[lineNo_ - 1], lineNo_);
            if (toks.empty()) continue;
            if (toks[0].text != "class")
                throw ParseError("expected 'class', got '" + toks[0].text + "'", lineNo_,
                                 toks[0].col);
            parseClass(p, toks);
        }
        checkReferences(p);
        return p;
    }

private:
    std::vector<std::string> lines_;
    int lineNo_ = 0;

    [[noreturn]] void fail(const std::string& msg, int col = 1) const {
        throw ParseError(msg, lineNo_, col);
    }

    std::vector<Token> nextLine() {
        while (++lineNo_ <= static_cast<int>(lines_.size())) {
            auto toks = tokenizeLine(lines_[lineNo_ - 1], lineNo_);
            if (!toks.empty()) return toks;
        }
        throw ParseError("unexpected end of input", lineNo_, 1);
    }

    void parseClass(Program& p, const std::vector<Token>& header) {
        ClassDef cls;
        cls.line = lineNo_;
        size_t i = 1;
        if (i >= header.size()) fail("class name missing");
        cls.name = header[i].text;
        if (!validIdent(cls.name, true)) fail("invalid class name '" + cls.name + "'", header[i].col);
        if (p.classes.count(cls.name)) fail("duplicate class '" + cls.name + "'", header[i].col);
        ++i;
        while (i < header.size()) {
            const std::string& kw = header[i].text;
            if (kw == "extends") {
                if (cls.superclass) fail("duplicate extends clause", header[i].col);
                if (++i >= header.size()) fail("extends needs a class name");
                cls.superclass = header[i].text;
                if (!validIdent(*cls.superclass, true))
                    fail("invalid superclass name", header[i].col);
                ++i;
            } else if (kw == "implements") {
                if (!cls.interfaces.empty()) fail("duplicate implements clause", header[i].col);
                ++i;
                bool expectName = true;
                while (i < header.size() && header[i].text != "extern" &&
                       header[i].text != "extends") {
                    if (header[i].text == ",") {
                        if (expectName) fail("misplaced ','", header[i].col);
                        expectName = true;
                    } else {
                        if (!expectName) break;
                        if (!validIdent(header[i].text, true))
                            fail("invalid interface name", header[i].col);
                        cls.interfaces.push_back(header[i].text);
                        expectName = false;
                    }
                    ++i;
                }
                if (cls.interfaces.empty()) fail("implements needs at least one name");
            } else if (kw == "extern") {
                cls.is_extern = true;
                ++i;
            } else {
                fail("unexpected token '" + kw + "' in class header", header[i].col);
            }
        }

        for (;;) {
            auto toks = nextLine();
            const std::string& kw = toks[0].text;
            if (kw == "end") break;
            if (kw == "field" || kw == "static") {
                if (toks.size() != 2) fail(kw + " expects exactly one name", toks[0].col);
                if (!validIdent(toks[1].text, false)) fail("invalid field name", toks[1].col);
                auto& list = kw == "field" ? cls.fields : cls.static_fields;
                for (const auto& f : list)
                    if (f == toks[1].text) fail("duplicate field '" + toks[1].text + "'", toks[1].col);
                list.push_back(toks[1].text);
            } else if (kw == "method") {
                parseMethod(cls, toks);
            } else {
                fail("expected field/static/method/end, got '" + kw + "'", toks[0].col);
            }
        }

        p.classes.emplace(cls.name, std::move(cls));
    }

    void parseMethod(ClassDef& cls, const std::vector<Token>& header) {
        MethodDef m;
        m.line = lineNo_;
        size_t i = 1;
        if (i < header.size() && header[i].text == "static") {
            m.is_static = true;
            ++i;
        }
        if (i >= header.size()) fail("method name missing");
        const std::string& sig = header[i].text;
        auto slash = sig.rfind('/');
        if (slash == std::string::npos) fail("method signature needs /arity", header[i].col);
        m.name = sig.substr(0, slash);
        if (!validMethodName(m.name)) fail("invalid method name '" + m.name + "'", header[i].col);
        try {
            size_t used = 0;
            m.arity = std::stoi(sig.substr(slash + 1), &used);
            if (used != sig.size() - slash - 1 || m.arity < 0) throw std::invalid_argument("");
        } catch (const std::exception&) {
            fail("invalid arity in '" + sig + "'", header[i].col);
        }
        ++i;
        if (i < header.size() && header[i].text == "extern") {
            m.is_extern = true;
            ++i;
        }
        if (i < header.size()) fail("trailing tokens after method signature", header[i].col);
        if (m.name == "<clinit>" && (!m.is_static || m.arity != 0))
            fail("<clinit> must be declared 'method static <clinit>/0'");
        if (cls.is_extern && !m.is_extern)
            fail("methods of extern classes must be extern");

        if (cls.methods.count({m.name, m.arity}))
            fail("duplicate method '" + m.name + "/" + std::to_string(m.arity) + "'");

        if (!m.is_extern) parseBody(m);

        cls.methods.emplace(std::make_pair(m.name, m.arity), std::move(m));
    }

    void parseBody(MethodDef& m) {
        bool sawInstr = false;
        for (;;) {
            auto toks = nextLine();
            size_t i = 0;
            if (toks[0].text == "end") {
                if (toks.size() > 1) fail("trailing tokens after end", toks[1].col);
                break;
            }
            if (toks[0].text == "param") {
                if (sawInstr) fail("param annotations must precede instructions", toks[0].col);
                // param <i> : <Class>
                if (toks.size() != 4 || toks[2].text != ":")
                    fail("expected 'param <i> : <Class>'", toks[0].col);
                int slot = parseSlot(toks[1]);
                if (!validIdent(toks[3].text, true)) fail("invalid class name", toks[3].col);
                if (m.param_classes.count(slot)) fail("duplicate param annotation", toks[1].col);
                m.param_classes[slot] = toks[3].text;
                continue;
            }
            // optional label prefix: <label> : [<opcode> …]. A label alone on
            // its line binds to the next instruction.
            if (toks.size() >= 2 && toks[1].text == ":") {
                if (!validIdent(toks[0].text, false)) fail("invalid label", toks[0].col);
                if (m.labels.count(toks[0].text))
                    fail("duplicate label '" + toks[0].text + "'", toks[0].col);
                m.labels[toks[0].text] = static_cast<int>(m.body.size());
                i = 2;
                if (i >= toks.size()) continue;
            }
            m.body.push_back(parseInstruction(toks, i));
            sawInstr = true;
        }
        for (const auto& [name, idx] : m.labels)
            if (idx >= static_cast<int>(m.body.size()))
                fail("label '" + name + "' must prefix an instruction");
        resolveLabels(m);
    }

    int parseSlot(const Token& tok) {
        try {
            size_t used = 0;
            int v = std::stoi(tok.text, &used);
            if (used != tok.text.size() || v < 0) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            fail("expected a non-negative slot index, got '" + tok.text + "'", tok.col);
        }
    }

    Instruction parseInstruction(const std::vector<Token>& toks, size_t i) {
        Instruction ins;
        ins.line = lineNo_;
        auto it = opTable().find(toks[i].text);
        if (it == opTable().end()) fail("unknown opcode '" + toks[i].text + "'", toks[i].col);
        ins.op = it->second.op;
        auto need = [&](size_t extra) {
            if (toks.size() != i + 1 + extra)
                fail(std::string("opcode ") + toks[i].text + " takes " + std::to_string(extra) +
                         " operand(s)",
                     toks[i].col);
        };
        using Operand = OpInfo::Operand;
        switch (it->second.operand) {
            case Operand::None:
                need(0);
                break;
            case Operand::Int: {
                need(1);
                const std::string& s = toks[i + 1].text;
                try {
                    size_t used = 0;
                    ins.int_val = std::stoll(s, &used);
                    if (used != s.size()) throw std::invalid_argument("");
                } catch (const std::exception&) {
                    fail("invalid integer literal '" + s + "'", toks[i + 1].col);
                }
                break;
            }
            case Operand::Str:
                need(1);
                if (toks[i + 1].text.front() != '"')
                    fail("const.str expects a quoted string", toks[i + 1].col);
                ins.str_val = decodeString(toks[i + 1].text, lineNo_, toks[i + 1].col);
                break;
            case Operand::Slot:
                need(1);
                ins.slot = parseSlot(toks[i + 1]);
                break;
            case Operand::Class:
                need(1);
                if (!validIdent(toks[i + 1].text, true)) fail("invalid class name", toks[i + 1].col);
                ins.cls = toks[i + 1].text;
                break;
            case Operand::Field: {
                need(1);
                const std::string& s = toks[i + 1].text;
                auto dot = s.rfind('.');
                if (dot == std::string::npos || dot == 0 || dot + 1 >= s.size())
                    fail("expected Class.field", toks[i + 1].col);
                ins.fref = {s.substr(0, dot), s.substr(dot + 1)};
                if (!validIdent(ins.fref.cls, true) || !validIdent(ins.fref.name, false))
                    fail("invalid field reference '" + s + "'", toks[i + 1].col);
                break;
            }
            case Operand::Method: {
                need(1);
                const std::string& s = toks[i + 1].text;
                auto slash = s.rfind('/');
                if (slash == std::string::npos) fail("expected Class.name/arity", toks[i + 1].col);
                std::string head = s.substr(0, slash);
                auto dot = head.rfind('.');
                if (dot == std::string::npos || dot == 0 || dot + 1 >= head.size())
                    fail("expected Class.name/arity", toks[i + 1].col);
                ins.mref.cls = head.substr(0, dot);
                ins.mref.name = head.substr(dot + 1);
                try {
                    size_t used = 0;
                    ins.mref.arity = std::stoi(s.substr(slash + 1), &used);
                    if (used != s.size() - slash - 1 || ins.mref.arity < 0)
                        throw std::invalid_argument("");
                } catch (const std::exception&) {
                    fail("invalid arity in '" + s + "'", toks[i + 1].col);
                }
                if (!validIdent(ins.mref.cls, true) || !validMethodName(ins.mref.name))
                    fail("invalid method reference '" + s + "'", toks[i + 1].col);
                if ((ins.op == Op::InvokeVirtual || ins.op == Op::InvokeInterface) &&
                    ins.mref.arity < 1)
                    fail("receiver-taking invoke needs arity >= 1", toks[i + 1].col);
                break;
            }
            case Operand::Label:
                need(1);
                if (!validIdent(toks[i + 1].text, false)) fail("invalid label", toks[i + 1].col);
                ins.label = toks[i + 1].text;
                break;
        }
        return ins;
    }

    void resolveLabels(MethodDef& m) {
        for (auto& ins : m.body) {
            if (ins.op != Op::Ifz && ins.op != Op::Goto) continue;
            auto it = m.labels.find(ins.label);
            if (it == m.labels.end())
                throw ParseError("unresolved label '" + ins.label + "'", ins.line, 1);
            ins.target = it->second;
        }
    }

    // Program-level check: every referenced class name must be declared
    // (plain or extern).
    void checkReferences(const Program& p) const {
        auto require = [&](const std::string& name, int line) {
            if (!p.classes.count(name))
                throw ParseError("reference to undeclared class '" + name + "'", line, 1);
        };
        for (const auto& [cname, cls] : p.classes) {
            (void)cname;
            if (cls.superclass) require(*cls.superclass, cls.line);
            for (const auto& itf : cls.interfaces) require(itf, cls.line);
            for (const auto& [sig, m] : cls.methods) {
                (void)sig;
                for (const auto& [slot, pcls] : m.param_classes) {
                    (void)slot;
                    require(pcls, m.line);
                }
                for (const auto& ins : m.body) {
                    switch (ins.op) {
                        case Op::New: require(ins.cls, ins.line); break;
                        case Op::GetField:
                        case Op::PutField:
                        case Op::GetStatic:
                        case Op::PutStatic: require(ins.fref.cls, ins.line); break;
                        case Op::InvokeStatic:
                        case Op::InvokeVirtual:
                        case Op::InvokeInterface: require(ins.mref.cls, ins.line); break;
                        default: break;
                    }
                }
            }
        }
    }
};

} // namespace

const char* op_name(Op op) {
    for (const auto& [name, info] : opTable())
        if (info.op == op) return name.c_str();
    return "?";
}

bool MethodDef::returns_value() const {
    for (const auto& ins : body)
        if (ins.op == Op::ReturnVal) return true;
    return false;
}

const MethodDef* Program::resolve_method(const MethodRef& ref, std::string* defining_cls) const {
    const ClassDef* cls = find_class(ref.cls);
    std::map<std::string, bool> seen; // guards against cyclic extends chains
    while (cls && !seen[cls->name]) {
        seen[cls->name] = true;
        if (const MethodDef* m = cls->find_method(ref.name, ref.arity)) {
            if (defining_cls) *defining_cls = cls->name;
            return m;
        }
        cls = cls->superclass ? find_class(*cls->superclass) : nullptr;
    }
    return nullptr;
}

Program parse_program(const std::string& text) { return Parser(text).run(); }

Program parse_program_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_program(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.line, e.col);
    }
}

} // namespace tg
