#pragma once

#include <istream>
#include <string>
#include <vector>

#include "preblock/error.hpp"

namespace preblock::csv {

// Minimal RFC 4180 reader: comma separated, double-quote quoting with ""
// escapes, quoted fields may span lines, CRLF or LF endings. A UTF-8 BOM at
// the start of the stream is skipped.
class Reader {
public:
  explicit Reader(std::istream &in) : in_(in) {
    if (in_.peek() == 0xEF) {
      char bom[3];
      in_.read(bom, 3);
      if (!(static_cast<unsigned char>(bom[1]) == 0xBB &&
            static_cast<unsigned char>(bom[2]) == 0xBF))
        throw FormatError("csv: malformed byte-order mark");
    }
  }

  /// Reads the next record into fields. Returns false at end of input.
  bool next(std::vector<std::string> &fields) {
    fields.clear();
    if (in_.peek() == std::char_traits<char>::eof())
      return false;
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;
    for (;;) {
      const int c = in_.get();
      if (c == std::char_traits<char>::eof()) {
        if (quoted)
          throw FormatError("csv: unterminated quoted field at record " +
                            std::to_string(record_));
        fields.push_back(std::move(field));
        break;
      }
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_started_quoted) {
        quoted = true;
        field_started_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_started_quoted = false;
      } else if (c == '\n') {
        fields.push_back(std::move(field));
        break;
      } else if (c == '\r') {
        if (in_.peek() == '\n')
          in_.get();
        fields.push_back(std::move(field));
        break;
      } else {
        field.push_back(static_cast<char>(c));
      }
    }
    ++record_;
    return true;
  }

private:
  std::istream &in_;
  std::size_t record_ = 0;
};

/// Quotes a field only when it needs it.
inline std::string escape(const std::string &field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos)
    return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"')
      out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

} // namespace preblock::csv
