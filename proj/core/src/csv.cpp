#include "bugprio/csv.hpp"

namespace bugprio::csv {

std::optional<Record> Reader::next() {
  Record rec;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool any_content = false;
  int c;

  auto finish_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };

  while (true) {
    c = in_.get();
    if (c == EOF) {
      if (in_.bad()) return std::nullopt;
      if (!any_content) return std::nullopt;
      if (in_quotes) rec.error = "unterminated quoted field";
      finish_field();
      return rec;
    }
    if (!any_content) {
      // Skip blank lines between records.
      if (c == '\n') {
        ++line_;
        continue;
      }
      if (c == '\r' && in_.peek() == '\n') {
        in_.get();
        ++line_;
        continue;
      }
      any_content = true;
      rec.line = line_;
    }

    if (in_quotes) {
      if (c == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }

    switch (c) {
      case ',':
        finish_field();
        break;
      case '"':
        if (field.empty() && !field_was_quoted) {
          in_quotes = true;
          field_was_quoted = true;
        } else {
          if (!rec.error) rec.error = "stray quote in field " + std::to_string(rec.fields.size() + 1);
          field.push_back('"');
        }
        break;
      case '\r':
        if (in_.peek() == '\n') break;
        field.push_back('\r');
        break;
      case '\n':
        ++line_;
        finish_field();
        return rec;
      default:
        if (field_was_quoted && !rec.error) {
          rec.error = "text after closing quote in field " + std::to_string(rec.fields.size() + 1);
        }
        field.push_back(static_cast<char>(c));
    }
  }
}

std::string escape_field(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape_field(fields[i]);
  }
  out << '\n';
}

}  // namespace bugprio::csv
