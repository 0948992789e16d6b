#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace angrymtl {

// RFC-4180 CSV. Fields may be quoted with '"'; quoted fields may contain
// commas, doubled quotes, and line breaks. Lines may end in LF or CRLF.
// A stray quote inside an unquoted field is kept literally rather than
// rejected, so row-level validation stays at the schema layer.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::vector<std::vector<std::string>> read_csv_file(const std::string& path);

std::string csv_quote(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace angrymtl
