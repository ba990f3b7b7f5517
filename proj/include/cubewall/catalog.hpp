#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cubewall/core.hpp"

namespace cubewall {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SortSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapacityError : public std::length_error {
 public:
  CapacityError(std::size_t overflow, const std::string& what) : std::length_error(what), overflow_(overflow) {}
  std::size_t overflow() const { return overflow_; }

 private:
  std::size_t overflow_;
};

struct CatalogEntry {
  std::vector<std::string> cells;  // one per catalog column, in column order

  const CubeId& id() const { return cells[0]; }
  const std::string& path() const { return cells[1]; }
};

// Survey metadata: the first column is the unique cube ID, the second the
// data file path. Immutable after ingest.
class SurveyCatalog {
 public:
  SurveyCatalog() = default;
  SurveyCatalog(std::vector<std::string> columns, std::vector<CatalogEntry> entries);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<CatalogEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool has_column(std::string_view name) const;
  std::size_t column_index(std::string_view name) const;
  bool is_numeric(std::size_t column) const { return numeric_[column]; }
  bool is_numeric(std::string_view name) const { return numeric_[column_index(name)]; }

  const CatalogEntry* find(const CubeId& id) const;
  const CatalogEntry& at(const CubeId& id) const;

  // Cell as JSON: number for numeric columns, string otherwise, null when empty.
  json value(const CubeId& id, std::string_view column) const;

  json to_json() const;

 private:
  std::vector<std::string> columns_;
  std::vector<CatalogEntry> entries_;
  std::vector<bool> numeric_;
  std::map<CubeId, std::size_t> by_id_;
};

// Comma separated, double-quote quoting, header row first, no embedded newlines.
SurveyCatalog ingest_catalog(std::string_view csv_text);
SurveyCatalog load_catalog_file(const std::string& path);

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no);

// Stable multi-key sort. Numeric columns compare as doubles, text columns by
// code point; empty cells go last in either direction.
std::vector<CubeId> sort_entries(const SurveyCatalog& catalog, const SortSpec& spec);

// ids[i] lands at linear slot i.
std::map<int, CubeId> layout_order(const std::vector<CubeId>& ids, const GridConfig& grid);

}  // namespace cubewall
