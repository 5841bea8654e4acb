#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace readmit {

// One parsed CSV file. Header row is mandatory for every format we read.
struct CsvTable {
    std::string source;  // file name for error messages
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based line where each row starts

    std::optional<std::size_t> column(const std::string& name) const;
    // Throws SchemaError naming the file and the missing column.
    std::size_t require_column(const std::string& name) const;
};

// RFC-4180: quoted fields, doubled-quote escapes, CRLF or LF records,
// newlines allowed inside quoted fields.
CsvTable read_csv(std::istream& in, const std::string& source_name);
CsvTable read_csv_file(const std::string& path);

std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

}  // namespace readmit
