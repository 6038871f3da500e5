#pragma once

// Helpers shared by the line-oriented text formats.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lanequest::text {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Splits on tabs and spaces; empty fields are dropped.
std::vector<std::string_view> split_fields(std::string_view line);

/// Strict parsers. Throw ParseError tagged with `line_no`.
double parse_double(std::string_view field, std::size_t line_no);
long long parse_int(std::string_view field, std::size_t line_no);

/// Strips a trailing '\r' so CRLF files parse like LF files.
std::string_view chomp(std::string_view line);

/// Reads the whole file. Throws IoError with the path on failure.
std::string read_file(const std::string& path);

/// Writes `contents` atomically enough for our purposes (truncate + write).
void write_file(const std::string& path, std::string_view contents);

}  // namespace lanequest::text
