#include "lgnn/io.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lgnn::io {

int64_t Csv::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int64_t>(i);
  return -1;
}

int64_t Csv::require_column(const std::string& name,
                            const std::string& file) const {
  const int64_t c = column(name);
  if (c < 0) throw DataError(file + ": missing required column '" + name + "'");
  return c;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

Csv read_csv(const std::filesystem::path& path, char delim) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  Csv csv;
  std::string line;
  if (!std::getline(is, line))
    throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  csv.header = split(line, delim);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto row = split(line, delim);
    if (row.size() != csv.header.size())
      throw DataError(path.string() + ": row with " +
                      std::to_string(row.size()) + " fields, expected " +
                      std::to_string(csv.header.size()));
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

std::string fmt_double(double v) {
  char buf[64];
  // %.17g round-trips every finite double
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw DataError(context + ": cannot parse number '" + s + "'");
  return v;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace lgnn::io
