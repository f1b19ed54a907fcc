#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tg {

// Opcodes of the GASM mini-bytecode. The set is deliberately small: an
// untyped stack machine with constants, locals, a few operators, object
// and static field access, three invoke flavours and one conditional jump.
enum class Op {
    ConstInt,
    ConstStr,
    ConstNull,
    Load,
    Store,
    Add,
    Sub,
    Mul,
    Concat,
    CmpEq,
    CmpNe,
    CmpLt,
    Dup,
    Pop,
    Swap,
    New,
    GetField,
    PutField,
    GetStatic,
    PutStatic,
    InvokeStatic,
    InvokeVirtual,
    InvokeInterface,
    Ifz,
    Goto,
    Return,
    ReturnVal,
    Throw,
};

const char* op_name(Op op);

/// Reference to a method as written in an invoke operand: `Cls.name/arity`.
/// For invoke.virtual / invoke.interface the arity counts the receiver.
struct MethodRef {
    std::string cls;
    std::string name;
    int arity = 0;

    std::string key() const { return cls + "." + name + "/" + std::to_string(arity); }
    bool operator==(const MethodRef&) const = default;
    auto operator<=>(const MethodRef&) const = default;
};

struct FieldRef {
    std::string cls;
    std::string name;

    std::string key() const { return cls + "." + name; }
    bool operator==(const FieldRef&) const = default;
    auto operator<=>(const FieldRef&) const = default;
};

struct Instruction {
    Op op = Op::Return;
    int64_t int_val = 0;      // const.int value
    int slot = 0;             // load / store
    std::string str_val;      // const.str payload
    std::string cls;          // new
    MethodRef mref;           // invoke.*
    FieldRef fref;            // getfield / putfield / getstatic / putstatic
    std::string label;        // symbolic target for ifz / goto
    int target = -1;          // resolved target index
    int line = 0;             // source line, diagnostics only

    bool operator==(const Instruction& o) const {
        return op == o.op && int_val == o.int_val && slot == o.slot && str_val == o.str_val &&
               cls == o.cls && mref == o.mref && fref == o.fref && label == o.label &&
               target == o.target;
    }
};

struct MethodDef {
    std::string name;
    int arity = 0;
    bool is_static = false;
    bool is_extern = false;
    std::vector<Instruction> body;
    std::map<std::string, int> labels;       // label -> instruction index
    std::map<int, std::string> param_classes; // local slot -> declared class
    int line = 0;

    bool is_clinit() const { return name == "<clinit>"; }
    /// True when the body contains a return.val; verified methods never mix
    /// plain return and return.val.
    bool returns_value() const;

    bool operator==(const MethodDef& o) const {
        return name == o.name && arity == o.arity && is_static == o.is_static &&
               is_extern == o.is_extern && body == o.body && labels == o.labels &&
               param_classes == o.param_classes;
    }
};

struct ClassDef {
    std::string name;
    std::optional<std::string> superclass;
    std::vector<std::string> interfaces;
    std::vector<std::string> fields;
    std::vector<std::string> static_fields;
    std::map<std::pair<std::string, int>, MethodDef> methods; // (name, arity) -> def
    bool is_extern = false;
    int line = 0;

    const MethodDef* find_method(const std::string& name, int arity) const {
        auto it = methods.find({name, arity});
        return it == methods.end() ? nullptr : &it->second;
    }

    bool operator==(const ClassDef& o) const {
        return name == o.name && superclass == o.superclass && interfaces == o.interfaces &&
               fields == o.fields && static_fields == o.static_fields && methods == o.methods &&
               is_extern == o.is_extern;
    }
};

/// Identifies one method in a loaded program.
struct MethodId {
    std::string cls;
    std::string name;
    int arity = 0;

    std::string key() const { return cls + "." + name + "/" + std::to_string(arity); }
    MethodRef ref() const { return {cls, name, arity}; }
    bool operator==(const MethodId&) const = default;
    auto operator<=>(const MethodId&) const = default;
};

/// A parsed, immutable GASM unit: the class set plus the pattern used to
/// recognize endpoint parameter classes (configured at load time).
struct Program {
    std::map<std::string, ClassDef> classes;
    std::string entry_pattern = ".*Request$";

    const ClassDef* find_class(const std::string& name) const {
        auto it = classes.find(name);
        return it == classes.end() ? nullptr : &it->second;
    }

    /// Resolves `ref.cls`'s method, walking up the superclass chain.
    /// Returns the defining class name alongside the definition.
    const MethodDef* resolve_method(const MethodRef& ref, std::string* defining_cls = nullptr) const;

    bool operator==(const Program& o) const { return classes == o.classes; }
};

struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(const std::string& msg, int line_, int col_)
        : std::runtime_error(msg), line(line_), col(col_) {}
};

} // namespace tg
