#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "forumstrat/error.hpp"

namespace forumstrat::csv {

using Row = std::vector<std::string>;

/// Splits one RFC 4180 record from the stream. Quoted fields may span
/// lines. Returns false at end of input.
inline bool read_row(std::istream& in, Row& row) {
  row.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  row.push_back(std::move(field));
  return true;
}

inline std::string escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

/// Header-checked table: reads all rows, requiring the given leading columns.
struct Table {
  Row header;
  std::vector<Row> rows;
};

inline Table read_table(std::istream& in, const Row& required) {
  Table t;
  if (!read_row(in, t.header)) throw DataError("csv: empty input, expected header");
  for (std::size_t i = 0; i < required.size(); ++i) {
    if (i >= t.header.size() || t.header[i] != required[i]) {
      throw DataError("csv: expected column '" + required[i] + "' at position " +
                      std::to_string(i + 1));
    }
  }
  Row r;
  std::size_t line = 1;
  while (read_row(in, r)) {
    ++line;
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() < required.size()) {
      throw DataError("csv: line " + std::to_string(line) + " has " +
                      std::to_string(r.size()) + " fields, expected " +
                      std::to_string(required.size()));
    }
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace forumstrat::csv
