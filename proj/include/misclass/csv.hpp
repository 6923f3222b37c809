#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "misclass/errors.hpp"

namespace misclass {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw MissingColumn("column '" + name + "' not found");
  }

  bool has_column(const std::string& name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }
};

// RFC-4180 parser: quoted fields with doubled-quote escapes, CRLF or LF
// line endings, header row required.
inline Table parse_csv(const std::string& text) {
  Table table;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;

  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
    field_was_quoted = false;
  };
  auto end_row = [&]() {
    end_field();
    if (table.header.empty()) {
      table.header = row;
    } else {
      if (row.size() != table.header.size()) {
        throw ParseError("row " + std::to_string(line) + " has " +
                         std::to_string(row.size()) + " fields, expected " +
                         std::to_string(table.header.size()));
      }
      table.rows.push_back(row);
    }
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw ParseError("line " + std::to_string(line) +
                           ": quote inside unquoted field");
        }
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field");
  if (!field.empty() || !row.empty() || field_was_quoted) end_row();
  if (table.header.empty()) throw ParseError("missing header row");
  return table;
}

inline Table read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

inline std::string csv_escape(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (const char c : value) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline void write_csv_file(const std::string& path,
                           const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << csv_escape(header[j]);
  }
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << csv_escape(row[j]);
    }
    out << "\n";
  }
}

}  // namespace misclass
