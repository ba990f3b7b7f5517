#include "cubewall/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cubewall {

namespace {

std::optional<double> parse_number(std::string_view cell) {
  // Trim surrounding blanks; from_chars rejects a leading '+', so skip it.
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

SurveyCatalog::SurveyCatalog(std::vector<std::string> columns, std::vector<CatalogEntry> entries)
    : columns_(std::move(columns)), entries_(std::move(entries)) {
  if (columns_.size() < 2) throw IngestError("catalog needs at least an ID and a path column");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].cells.size() != columns_.size())
      throw IngestError("entry " + std::to_string(i) + " has wrong cell count");
    auto [it, inserted] = by_id_.emplace(entries_[i].id(), i);
    if (!inserted) throw IngestError("duplicate ID " + entries_[i].id());
  }
  numeric_.assign(columns_.size(), false);
  // ID and path are always text.
  for (std::size_t c = 2; c < columns_.size(); ++c) {
    bool any = false;
    bool all = true;
    for (const auto& e : entries_) {
      if (e.cells[c].empty()) continue;
      any = true;
      if (!parse_number(e.cells[c])) {
        all = false;
        break;
      }
    }
    numeric_[c] = any && all;
  }
}

bool SurveyCatalog::has_column(std::string_view name) const {
  return std::find(columns_.begin(), columns_.end(), name) != columns_.end();
}

std::size_t SurveyCatalog::column_index(std::string_view name) const {
  auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw SortSpecError("unknown catalog field '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

const CatalogEntry* SurveyCatalog::find(const CubeId& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

const CatalogEntry& SurveyCatalog::at(const CubeId& id) const {
  const auto* e = find(id);
  if (!e) throw ArgumentError("unknown cube ID " + id);
  return *e;
}

json SurveyCatalog::value(const CubeId& id, std::string_view column) const {
  const auto& cell = at(id).cells[column_index(column)];
  if (cell.empty()) return nullptr;
  if (is_numeric(column)) return *parse_number(cell);
  return cell;
}

json SurveyCatalog::to_json() const {
  json cols = json::array();
  for (std::size_t c = 0; c < columns_.size(); ++c)
    cols.push_back({{"name", columns_[c]}, {"numeric", static_cast<bool>(numeric_[c])}});
  json rows = json::array();
  for (const auto& e : entries_) {
    json row = json::object();
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (e.cells[c].empty()) row[columns_[c]] = nullptr;
      else if (numeric_[c]) row[columns_[c]] = *parse_number(e.cells[c]);
      else row[columns_[c]] = e.cells[c];
    }
    rows.push_back(std::move(row));
  }
  return json{{"columns", cols}, {"entries", rows}};
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      if (!cur.empty() || was_quoted)
        throw IngestError("line " + std::to_string(line_no) + ": stray quote in cell");
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw IngestError("line " + std::to_string(line_no) + ": text after closing quote");
      cur.push_back(ch);
    }
  }
  if (quoted) throw IngestError("line " + std::to_string(line_no) + ": unterminated quote");
  cells.push_back(std::move(cur));
  return cells;
}

SurveyCatalog ingest_catalog(std::string_view csv_text) {
  std::vector<std::string> header;
  std::vector<CatalogEntry> entries;
  std::map<CubeId, std::size_t> first_seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  if (csv_text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos <= csv_text.size()) {
    auto nl = csv_text.find('\n', pos);
    auto line = csv_text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? csv_text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cells = split_csv_line(line, line_no);
    if (header.empty()) {
      if (cells.size() < 2) throw IngestError("line 1: header needs at least ID and path columns");
      header = std::move(cells);
      continue;
    }
    if (cells.size() != header.size()) {
      throw IngestError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " cells, found " + std::to_string(cells.size()));
    }
    if (cells[0].empty()) throw IngestError("line " + std::to_string(line_no) + ": empty ID");
    if (!first_seen.emplace(cells[0], line_no).second) throw IngestError("duplicate ID " + cells[0]);
    entries.push_back(CatalogEntry{std::move(cells)});
  }
  if (header.empty()) throw IngestError("catalog is empty; a header row is required");
  return SurveyCatalog(std::move(header), std::move(entries));
}

SurveyCatalog load_catalog_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open catalog " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ingest_catalog(ss.str());
}

std::vector<CubeId> sort_entries(const SurveyCatalog& catalog, const SortSpec& spec) {
  struct Key {
    std::size_t column;
    bool numeric;
    bool descending;
  };
  std::vector<Key> keys;
  for (const auto& k : spec) {
    auto c = catalog.column_index(k.field);
    keys.push_back({c, catalog.is_numeric(c), k.direction == SortDirection::descending});
  }
  // Pre-parse numeric cells once.
  const auto& entries = catalog.entries();
  std::vector<std::vector<double>> nums(keys.size(), std::vector<double>(entries.size(), 0.0));
  for (std::size_t k = 0; k < keys.size(); ++k)
    if (keys[k].numeric)
      for (std::size_t i = 0; i < entries.size(); ++i)
        if (auto v = parse_number(entries[i].cells[keys[k].column])) nums[k][i] = *v;

  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const auto& ca = entries[a].cells[keys[k].column];
      const auto& cb = entries[b].cells[keys[k].column];
      if (ca.empty() || cb.empty()) {
        if (ca.empty() && cb.empty()) continue;
        return cb.empty();
      }
      int cmp = 0;
      if (keys[k].numeric) {
        double x = nums[k][a];
        double y = nums[k][b];
        cmp = x < y ? -1 : (y < x ? 1 : 0);
      } else {
        // std::string compares char_traits<char>, which is unsigned byte order,
        // i.e. code point order for UTF-8.
        int c = ca.compare(cb);
        cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
      }
      if (cmp != 0) return keys[k].descending ? cmp > 0 : cmp < 0;
    }
    return false;
  });
  std::vector<CubeId> ids;
  ids.reserve(order.size());
  for (auto i : order) ids.push_back(entries[i].id());
  return ids;
}

std::map<int, CubeId> layout_order(const std::vector<CubeId>& ids, const GridConfig& grid) {
  auto capacity = static_cast<std::size_t>(grid.slot_count());
  if (ids.size() > capacity) {
    auto overflow = ids.size() - capacity;
    throw CapacityError(overflow, std::to_string(ids.size()) + " cubes exceed " + std::to_string(capacity) +
                                      " slots by " + std::to_string(overflow));
  }
  std::map<int, CubeId> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(static_cast<int>(i), ids[i]);
  return out;
}

}  // namespace cubewall
