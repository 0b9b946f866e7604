#pragma once

#include <span>
#include <string>
#include <string_view>

namespace contextfed {

/// Decimal rendering with 17 significant digits; parses back bit-exactly.
/// Throws Error on non-finite input (JSON has no representation for it).
std::string format_double(double v);

/// `[a,b,c]` with every element rendered by format_double.
std::string format_vector(std::span<const double> values);

/// JSON string literal with escaping.
std::string quote_json(std::string_view s);

/// Reads a whole file; throws Error naming the path when unreadable.
std::string read_file(const std::string& path);

/// Writes a whole file; throws Error naming the path on failure.
void write_file(const std::string& path, std::string_view contents);

}  // namespace contextfed
