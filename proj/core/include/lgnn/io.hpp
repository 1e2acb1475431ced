#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lgnn/errors.hpp"

namespace lgnn::io {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int64_t column(const std::string& name) const;  // -1 if absent
  int64_t require_column(const std::string& name,
                         const std::string& file) const;
};

std::vector<std::string> split(const std::string& line, char delim);

Csv read_csv(const std::filesystem::path& path, char delim = ',');

// Shortest round-trip decimal representation of a double.
std::string fmt_double(double v);

double parse_double(const std::string& s, const std::string& context);

// FNV-1a 64-bit content hash, hex-encoded; used by run manifests.
std::string file_hash(const std::filesystem::path& path);

}  // namespace lgnn::io
