#pragma once

// Minimal numeric CSV helpers shared by the file readers and writers.

#include <filesystem>
#include <string>
#include <vector>

namespace mmsb::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Reads a header line followed by numeric rows; blank lines are skipped.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(const std::string& line, char sep = ',');
std::string trim(const std::string& s);
/// Parses a full string as a double; throws ParseError naming `what` on failure.
double parse_double(const std::string& text, const std::string& what);

}  // namespace mmsb::csv
