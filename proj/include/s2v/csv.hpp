#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace s2v::csv {

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and line
// breaks. Accepts LF or CRLF record terminators.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  // Returns false at end of input.
  bool next(std::vector<std::string>& fields);
  // 1-based line number where the last returned record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
};

std::string quote(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest representation that parses back to the same double.
std::string format_double(double v);
// Fixed number of significant digits (for human-facing reports).
std::string format_double(double v, int precision);

}  // namespace s2v::csv
