#pragma once

#include <string>

#include "tg/gasm.hpp"

namespace tg {

/// Parses GASM text into a Program. Throws ParseError with line/column on
/// malformed input, duplicate declarations, unresolved labels or references
/// to classes that are never declared.
Program parse_program(const std::string& text);

/// Convenience wrapper: reads the file and parses it. The file name is
/// prefixed to error messages.
Program parse_program_file(const std::string& path);

} // namespace tg
