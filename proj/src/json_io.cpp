#include "contextfed/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "contextfed/error.hpp"
#include "json.hpp"

namespace contextfed {

std::string format_double(double v) {
  if (!std::isfinite(v)) throw Error("cannot serialize non-finite value");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string out(buf);
  // Keep the token a JSON number that reads back as floating point.
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

std::string format_vector(std::span<const double> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  out += ']';
  return out;
}

std::string quote_json(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed: " + path);
}

}  // namespace contextfed
