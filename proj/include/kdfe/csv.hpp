#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kdfe::csv {

using Row = std::vector<std::string>;

/// Minimal RFC 4180 reader: comma separated, double-quote escaping, LF or
/// CRLF line ends. Tracks the physical line number of the current record.
class Reader {
  public:
    explicit Reader(std::istream &in) : in_{in} {}

    /// Reads the next record; returns false at end of input.
    bool next(Row &row);

    /// Line number (1-based) where the last record returned by next() began.
    std::size_t line() const noexcept { return record_line_; }

  private:
    std::istream &in_;
    std::size_t line_{0};
    std::size_t record_line_{0};
};

/// Reads a whole file: header row plus data rows. Throws ValidationError if
/// the file cannot be opened or is empty.
struct Table {
    Row header;
    std::vector<Row> rows;
    std::vector<std::size_t> lines;
};
Table read_file(const std::string &path);

void write_row(std::ostream &out, const Row &row);

/// Shortest text that parses back to the identical double.
std::string format_double(double value);
std::string format_optional(const std::optional<double> &value);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

} // namespace kdfe::csv
