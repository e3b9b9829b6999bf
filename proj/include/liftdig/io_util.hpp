#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace liftdig {

// Shortest representation that parses back to the same double.
std::string fmt_double(double v);

// Strict parse of a whole field; throws std::invalid_argument.
double parse_double(std::string_view s);

std::vector<std::string_view> split_csv_line(std::string_view line);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Sidecar path: same directory and stem, extension replaced by .json.
std::string sidecar_path(const std::string& path);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace liftdig
