#include "tg/printer.hpp"

#include <sstream>

namespace tg {
namespace {

void renderMethod(std::ostringstream& out, const MethodDef& m) {
    out << "  method " << (m.is_static ? "static " : "") << m.name << "/" << m.arity
        << (m.is_extern ? " extern" : "") << "\n";
    if (m.is_extern) return;
    for (const auto& [slot, cls] : m.param_classes)
        out << "    param " << slot << " : " << cls << "\n";
    // labels by instruction index, for inline emission
    std::map<int, std::string> byIndex;
    for (const auto& [label, idx] : m.labels) byIndex[idx] = label;
    for (size_t i = 0; i < m.body.size(); ++i) {
        auto it = byIndex.find(static_cast<int>(i));
        if (it != byIndex.end())
            out << "  " << it->second << ": ";
        else
            out << "    ";
        out << render_instruction(m.body[i]) << "\n";
    }
    out << "  end\n";
}

} // namespace

std::string quote_gasm_string(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
    return out;
}

std::string render_instruction(const Instruction& ins) {
    std::string name = op_name(ins.op);
    switch (ins.op) {
        case Op::ConstInt: return name + " " + std::to_string(ins.int_val);
        case Op::ConstStr: return name + " " + quote_gasm_string(ins.str_val);
        case Op::Load:
        case Op::Store: return name + " " + std::to_string(ins.slot);
        case Op::New: return name + " " + ins.cls;
        case Op::GetField:
        case Op::PutField:
        case Op::GetStatic:
        case Op::PutStatic: return name + " " + ins.fref.key();
        case Op::InvokeStatic:
        case Op::InvokeVirtual:
        case Op::InvokeInterface: return name + " " + ins.mref.key();
        case Op::Ifz:
        case Op::Goto: return name + " " + ins.label;
        default: return name;
    }
}

std::string render_gasm(const Program& p) {
    std::ostringstream out;
    bool first = true;
    for (const auto& [name, cls] : p.classes) {
        (void)name;
        if (!first) out << "\n";
        first = false;
        out << "class " << cls.name;
        if (cls.superclass) out << " extends " << *cls.superclass;
        if (!cls.interfaces.empty()) {
            out << " implements ";
            for (size_t i = 0; i < cls.interfaces.size(); ++i) {
                if (i) out << ",";
                out << cls.interfaces[i];
            }
        }
        if (cls.is_extern) out << " extern";
        out << "\n";
        for (const auto& f : cls.fields) out << "  field " << f << "\n";
        for (const auto& f : cls.static_fields) out << "  static " << f << "\n";
        for (const auto& [sig, m] : cls.methods) {
            (void)sig;
            renderMethod(out, m);
        }
        out << "end\n";
    }
    return out.str();
}

} // namespace tg
