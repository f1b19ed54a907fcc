#pragma once

#include <string>

#include "tg/gasm.hpp"

namespace tg {

/// Renders a Program back to GASM text. parse_program(render_gasm(p)) is
/// structurally equal to p.
std::string render_gasm(const Program& p);

std::string render_instruction(const Instruction& ins);

/// Quotes and escapes a string literal the way the parser understands it.
std::string quote_gasm_string(const std::string& s);

} // namespace tg
