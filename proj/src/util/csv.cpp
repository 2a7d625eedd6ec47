#include "kdfe/csv.hpp"

#include "kdfe/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace kdfe::csv {

bool Reader::next(Row &row) {
    row.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int ch;
    record_line_ = line_ + 1;
    while ((ch = in_.get()) != std::char_traits<char>::eof()) {
        any = true;
        char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') {
                    ++line_;
                }
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            if (in_.peek() == '\n') {
                continue;
            }
            field.push_back(c);
        } else if (c == '\n') {
            ++line_;
            row.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (!any) {
        return false;
    }
    ++line_;
    row.push_back(std::move(field));
    return true;
}

Table read_file(const std::string &path) {
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        throw ValidationError("cannot open '" + path + "'");
    }
    Reader reader{in};
    Table table;
    if (!reader.next(table.header)) {
        throw SchemaError("'" + path + "' is empty (no header row)");
    }
    Row row;
    while (reader.next(row)) {
        if (row.size() == 1 && row[0].empty()) {
            continue;
        }
        table.rows.push_back(row);
        table.lines.push_back(reader.line());
    }
    return table;
}

void write_row(std::ostream &out, const Row &row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) {
            out << ',';
        }
        const auto &f = row[i];
        if (f.find_first_of(",\"\n\r") == std::string::npos) {
            out << f;
            continue;
        }
        out << '"';
        for (char c : f) {
            if (c == '"') {
                out << '"';
            }
            out << c;
        }
        out << '"';
    }
    out << '\n';
}

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double> &value) {
    return value ? format_double(*value) : std::string{};
}

double parse_double(std::string_view text) {
    if (text == "inf") {
        return HUGE_VAL;
    }
    if (text == "-inf") {
        return -HUGE_VAL;
    }
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ValueError("unparseable number '" + std::string{text} + "'");
    }
    return value;
}

long long parse_int(std::string_view text) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ValueError("unparseable integer '" + std::string{text} + "'");
    }
    return value;
}

} // namespace kdfe::csv
