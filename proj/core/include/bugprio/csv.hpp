#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace bugprio::csv {

struct Record {
  std::vector<std::string> fields;
  /// 1-based physical line on which the record starts.
  std::size_t line = 0;
  /// Set when the record ended inside an open quote or had stray quotes.
  std::optional<std::string> error;
};

/// Streaming RFC-4180 reader: comma separated, double-quote escaping,
/// quoted fields may span lines, CRLF or LF terminators.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Next record, or nullopt at end of input. Blank lines are skipped.
  std::optional<Record> next();

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

/// Quotes a field only when it needs quoting.
std::string escape_field(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace bugprio::csv
