#include "aisurvey/csv.hpp"

#include "aisurvey/error.hpp"

#include <charconv>
#include <istream>
#include <ostream>

namespace aisurvey::csv {

std::optional<std::vector<std::string>> Reader::next() {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool was_quoted = false;
  record_line_ = physical_line_;

  for (;;) {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
      if (in_quotes) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(record_line_) + ": unterminated quoted field");
      }
      if (!any) return std::nullopt;
      fields.push_back(std::move(field));
      return fields;
    }
    any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++physical_line_;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field.empty() || was_quoted) {
          throw Error(ErrorKind::Parse, "line " + std::to_string(physical_line_) + ": stray quote");
        }
        in_quotes = true;
        was_quoted = true;
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
        break;
      case '\r':
        break;
      case '\n':
        ++physical_line_;
        fields.push_back(std::move(field));
        return fields;
      default:
        if (was_quoted) {
          throw Error(ErrorKind::Parse, "line " + std::to_string(physical_line_) + ": text after closing quote");
        }
        field.push_back(ch);
    }
  }
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorKind::Parse, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

long long parse_int(std::string_view text) {
  text = trim(text);
  long long value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorKind::Parse, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace aisurvey::csv
