#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "moralbench/error.hpp"

namespace moralbench::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields may contain separators, doubled quotes and newlines.
inline std::vector<Row> parse(std::string_view data, char sep = ',') {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < data.size(); ++i) {
    char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
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
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == sep) {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      // swallowed; handles CRLF
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::kSchemaError, "unterminated quoted CSV field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::string escape(std::string_view field, char sep = ',') {
  bool needs_quotes = field.find_first_of(std::string{sep, '"', '\n', '\r'}) != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& os, const Row& row, char sep = ',') {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << sep;
    os << escape(row[i], sep);
  }
  os << '\n';
}

/// Header-indexed view over parsed rows.
class Table {
 public:
  explicit Table(std::vector<Row> rows) {
    if (rows.empty()) throw Error(ErrorCode::kSchemaError, "CSV has no header row");
    header_ = std::move(rows.front());
    rows.erase(rows.begin());
    rows_ = std::move(rows);
  }

  const Row& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (header_[i] == name) return i;
    }
    throw Error(ErrorCode::kSchemaError, "missing column '" + std::string(name) + "'");
  }

  bool has_column(std::string_view name) const {
    for (const auto& h : header_) {
      if (h == name) return true;
    }
    return false;
  }

 private:
  Row header_;
  std::vector<Row> rows_;
};

}  // namespace moralbench::csv
