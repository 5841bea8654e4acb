#include "readmit/csv.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "readmit/error.hpp"

namespace readmit {

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t CsvTable::require_column(const std::string& name) const {
    auto idx = column(name);
    if (!idx) fail(ErrorCode::SchemaError, source + ": missing column '" + name + "'");
    return *idx;
}

CsvTable read_csv(std::istream& in, const std::string& source_name) {
    CsvTable table;
    table.source = source_name;

    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_open = false;  // true once the current record has any content
    std::size_t line = 1;
    std::size_t record_start_line = 1;
    bool header_done = false;

    auto end_field = [&] {
        record.push_back(field);
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        if (record.size() == 1 && record[0].empty()) {
            // blank line
        } else if (!header_done) {
            table.header = record;
            header_done = true;
        } else {
            table.rows.push_back(record);
            table.line_numbers.push_back(record_start_line);
        }
        record.clear();
        field_open = false;
    };

    char c;
    while (in.get(c)) {
        if (!field_open) {
            field_open = true;
            record_start_line = line;
        }
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // consumed with the following '\n'; a bare CR also ends the record
            if (in.peek() == '\n') in.get(c);
            ++line;
            end_record();
        } else if (c == '\n') {
            ++line;
            end_record();
        } else {
            field += c;
        }
    }
    if (in_quotes) fail(ErrorCode::SchemaError, source_name + ": unterminated quoted field");
    if (field_open || !field.empty()) end_record();  // final record without trailing newline

    // Strip a UTF-8 BOM if present.
    if (!table.header.empty() && table.header[0].rfind("\xEF\xBB\xBF", 0) == 0)
        table.header[0].erase(0, 3);
    if (table.header.empty())
        fail(ErrorCode::SchemaError, source_name + ": empty file, header row required");
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_csv(in, path);
}

std::string csv_escape(const std::string& field) {
    bool needs_quotes = false;
    for (char c : field) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quotes = true;
            break;
        }
    }
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(fields[i]);
    }
    out << '\n';
}

std::string format_double(double v) {
    // nlohmann's serializer emits the shortest representation that
    // round-trips, which keeps score files exact and runs reproducible.
    return nlohmann::json(v).dump();
}

}  // namespace readmit
