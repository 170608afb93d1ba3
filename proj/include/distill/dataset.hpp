#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "distill/error.hpp"

namespace distill {

enum class ColumnKind { continuous, binary, one_hot };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  int group = -1;  ///< index into FeatureSchema::groups() for one-hot members
};

/// A set of indicator columns encoding one nominal feature. With a reference
/// level (one encoded column dropped), an all-zero row encodes that level.
struct OneHotGroup {
  std::string name;
  std::vector<std::size_t> members;
  bool has_reference = false;
};

class FeatureSchema {
 public:
  std::size_t add_continuous(std::string name) { return add(std::move(name), ColumnKind::continuous, -1); }
  std::size_t add_binary(std::string name) { return add(std::move(name), ColumnKind::binary, -1); }

  /// Appends the member columns of a one-hot group; returns the group index.
  std::size_t add_group(std::string group_name, const std::vector<std::string>& member_names,
                        bool has_reference = false) {
    std::size_t min_members = has_reference ? 1 : 2;
    if (member_names.size() < min_members) {
      throw SchemaError("one-hot group '" + group_name + "' needs at least " +
                        std::to_string(min_members) + " member columns");
    }
    OneHotGroup g{std::move(group_name), {}, has_reference};
    int gid = static_cast<int>(groups_.size());
    for (const auto& m : member_names) g.members.push_back(add(m, ColumnKind::one_hot, gid));
    groups_.push_back(std::move(g));
    return groups_.size() - 1;
  }

  const std::vector<Column>& columns() const noexcept { return columns_; }
  const std::vector<OneHotGroup>& groups() const noexcept { return groups_; }
  std::size_t size() const noexcept { return columns_.size(); }
  const Column& operator[](std::size_t i) const { return columns_.at(i); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    auto idx = index_of(name);
    if (!idx) throw SchemaError("unknown column '" + std::string(name) + "'");
    return *idx;
  }

  bool all_discrete() const {
    return std::all_of(columns_.begin(), columns_.end(),
                       [](const Column& c) { return c.kind != ColumnKind::continuous; });
  }

  bool all_continuous() const {
    return std::all_of(columns_.begin(), columns_.end(),
                       [](const Column& c) { return c.kind == ColumnKind::continuous; });
  }

  /// Checks binary and one-hot invariants for one row. Returns an empty
  /// string when valid, else a description of the first violation.
  std::string check_row(std::span<const double> row) const {
    if (row.size() != columns_.size()) return "row arity mismatch";
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].kind != ColumnKind::continuous && row[j] != 0.0 && row[j] != 1.0) {
        return "column '" + columns_[j].name + "' is not 0/1";
      }
    }
    for (const auto& g : groups_) {
      int ones = 0;
      for (auto m : g.members) ones += row[m] == 1.0;
      if (ones > 1 || (ones == 0 && !g.has_reference)) {
        return "one-hot group '" + g.name + "' has " + std::to_string(ones) + " active members";
      }
    }
    return {};
  }

  bool operator==(const FeatureSchema& other) const {
    if (columns_.size() != other.columns_.size() || groups_.size() != other.groups_.size()) return false;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].name != other.columns_[i].name || columns_[i].kind != other.columns_[i].kind ||
          columns_[i].group != other.columns_[i].group)
        return false;
    }
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      if (groups_[i].name != other.groups_[i].name || groups_[i].members != other.groups_[i].members ||
          groups_[i].has_reference != other.groups_[i].has_reference)
        return false;
    }
    return true;
  }

 private:
  std::size_t add(std::string name, ColumnKind kind, int group) {
    if (index_of(name)) throw SchemaError("duplicate column '" + name + "'");
    columns_.push_back({std::move(name), kind, group});
    return columns_.size() - 1;
  }

  std::vector<Column> columns_;
  std::vector<OneHotGroup> groups_;
};

/// Row-major feature matrix with binary labels.
struct Dataset {
  FeatureSchema schema;
  std::size_t rows = 0;
  std::vector<double> X;
  std::vector<int> y;

  std::size_t cols() const noexcept { return schema.size(); }
  std::span<const double> row(std::size_t i) const { return {X.data() + i * cols(), cols()}; }
  std::span<double> row(std::size_t i) { return {X.data() + i * cols(), cols()}; }
  double at(std::size_t i, std::size_t j) const { return X[i * cols() + j]; }
  bool empty() const noexcept { return rows == 0; }

  void push_row(std::span<const double> values, int label) {
    if (values.size() != cols()) throw ShapeError("push_row: arity mismatch");
    X.insert(X.end(), values.begin(), values.end());
    y.push_back(label);
    ++rows;
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = at(i, j);
    return out;
  }

  bool has_both_labels() const {
    bool zero = false, one = false;
    for (int v : y) (v ? one : zero) = true;
    return zero && one;
  }

  /// Throws SchemaError on the first row violating the schema invariants.
  void validate() const {
    if (y.size() != rows || X.size() != rows * cols()) throw ShapeError("dataset storage size mismatch");
    for (std::size_t i = 0; i < rows; ++i) {
      if (y[i] != 0 && y[i] != 1) throw SchemaError("label of row " + std::to_string(i) + " is not 0/1");
      if (auto msg = schema.check_row(row(i)); !msg.empty()) {
        throw SchemaError("row " + std::to_string(i) + ": " + msg);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// CSV / schema loading

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) { return s.empty() || s == "?" || s == "NA" || s == "nan"; }

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline ColumnKind parse_kind(const std::string& kind, std::string& group) {
  if (kind == "continuous") return ColumnKind::continuous;
  if (kind == "binary") return ColumnKind::binary;
  if (kind.rfind("one-hot:", 0) == 0) {
    group = kind.substr(8);
    return ColumnKind::one_hot;
  }
  throw SchemaError("unknown column kind '" + kind + "'");
}

}  // namespace detail

/// Schema described as JSON:
///   {"label": "severity", "columns": {"age": "continuous", "d": "binary",
///    "red": "one-hot:colour", "blue": "one-hot:colour"}}
/// Column order is the order of keys in the file.
struct SchemaConfig {
  std::string label;
  FeatureSchema schema;
};

inline SchemaConfig schema_from_json(const nlohmann::ordered_json& j) {
  SchemaConfig cfg;
  if (!j.contains("label") || !j.contains("columns")) {
    throw SchemaError("schema config needs 'label' and 'columns'");
  }
  cfg.label = j.at("label").get<std::string>();
  // Group members are collected first so that each group is appended as a block.
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [name, kind] : j.at("columns").items()) entries.emplace_back(name, kind.get<std::string>());
  std::map<std::string, std::vector<std::string>> group_members;
  for (const auto& [name, kind] : entries) {
    std::string group;
    if (detail::parse_kind(kind, group) == ColumnKind::one_hot) group_members[group].push_back(name);
  }
  std::map<std::string, bool> emitted;
  for (const auto& [name, kind] : entries) {
    std::string group;
    switch (detail::parse_kind(kind, group)) {
      case ColumnKind::continuous: cfg.schema.add_continuous(name); break;
      case ColumnKind::binary: cfg.schema.add_binary(name); break;
      case ColumnKind::one_hot:
        if (!emitted[group]) {
          cfg.schema.add_group(group, group_members[group]);
          emitted[group] = true;
        }
        break;
    }
  }
  return cfg;
}

inline SchemaConfig load_schema_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file '" + path + "'");
  try {
    return schema_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("invalid schema file '" + path + "': " + e.what());
  }
}

/// Parses a comma-delimited table with a header row. Columns are taken in
/// schema order; extra CSV columns are ignored. Rows with a missing value
/// ("?", empty, NA) in a used column are dropped.
inline Dataset parse_csv(std::istream& in, const std::string& label_column, const FeatureSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("empty CSV input: no header row", line_no);
  for (auto& h : header) h = std::string(detail::trim(h));

  auto find = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("unknown column '" + name + "': not present in CSV header");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> source(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) source[j] = find(schema[j].name);
  std::size_t label_src = find(label_column);

  Dataset data;
  data.schema = schema;
  std::vector<double> values(schema.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    bool missing = false;
    for (std::size_t j = 0; j < schema.size() && !missing; ++j) {
      auto f = detail::trim(fields[source[j]]);
      if (detail::is_missing(f)) {
        missing = true;
        break;
      }
      auto v = detail::parse_double(f);
      if (!v) throw ParseError("non-numeric value '" + std::string(f) + "' in column '" + schema[j].name + "'", line_no);
      values[j] = *v;
    }
    auto lf = detail::trim(fields[label_src]);
    if (missing || detail::is_missing(lf)) continue;
    auto label = detail::parse_double(lf);
    if (!label || (*label != 0.0 && *label != 1.0)) {
      throw ParseError("label '" + std::string(lf) + "' is not 0/1", line_no);
    }
    data.push_row(values, static_cast<int>(*label));
  }
  if (data.rows == 0) throw ParseError("CSV input has no complete data rows", line_no);
  return data;
}

inline Dataset load_csv(const std::string& path, const std::string& label_column, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  return parse_csv(in, label_column, schema);
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Column layout produced by preprocess_mammographic. Indices 0-12 follow the
/// feature numbering used in the reference tree structures.
namespace mammographic {
inline const std::vector<std::string> kShapes = {"RoundShape", "OvalShape", "LobularShape", "IrregularShape"};
inline const std::vector<std::string> kMargins = {"CircumscribedMargin", "MicrolobulatedMargin", "ObscuredMargin",
                                                  "IllDefinedMargin", "SpiculatedMargin"};
inline const std::vector<std::string> kAges = {"30<Age<45", "45≤Age<60", "Age≥60", "Age<30"};
inline const std::string kDensity = "Density>2";
inline constexpr int kBiradsLevels = 7;  // 0..6

/// Age interval index into kAges for a raw age.
inline std::size_t age_slot(double age) {
  if (age < 30.0) return 3;
  if (age < 45.0) return 0;
  if (age < 60.0) return 1;
  return 2;
}
}  // namespace mammographic

/// Mammographic Mass preprocessing: shape and margin one-hot encoded, age cut
/// at 30/45/60 into four one-hot intervals, density binarised (density > 2),
/// BI-RADS kept as a one-hot nominal feature.
inline Dataset preprocess_mammographic(const Dataset& raw) {
  std::size_t birads = raw.schema.require("BI-RADS");
  std::size_t age = raw.schema.require("age");
  std::size_t shape = raw.schema.require("shape");
  std::size_t margin = raw.schema.require("margin");
  std::size_t density = raw.schema.require("density");

  using namespace mammographic;
  Dataset out;
  out.schema.add_group("shape", kShapes);
  out.schema.add_group("margin", kMargins);
  out.schema.add_group("age", kAges);
  out.schema.add_binary(kDensity);
  std::vector<std::string> birads_names;
  for (int k = 0; k < kBiradsLevels; ++k) birads_names.push_back("BI-RADS=" + std::to_string(k));
  out.schema.add_group("BI-RADS", birads_names);

  auto as_level = [](double v, int lo, int hi, const char* what, std::size_t row) {
    if (v != std::floor(v) || v < lo || v > hi) {
      throw SchemaError(std::string("mammographic: ") + what + " value " + std::to_string(v) +
                        " out of range in row " + std::to_string(row));
    }
    return static_cast<std::size_t>(v);
  };

  std::vector<double> values(out.cols());
  for (std::size_t i = 0; i < raw.rows; ++i) {
    std::fill(values.begin(), values.end(), 0.0);
    values[as_level(raw.at(i, shape), 1, 4, "shape", i) - 1] = 1.0;
    values[4 + as_level(raw.at(i, margin), 1, 5, "margin", i) - 1] = 1.0;
    values[9 + age_slot(raw.at(i, age))] = 1.0;
    values[13] = raw.at(i, density) > 2.0 ? 1.0 : 0.0;
    double b = raw.at(i, birads);
    if (b == 55.0) b = 5.0;  // known data-entry error in the public file
    values[14 + as_level(b, 0, kBiradsLevels - 1, "BI-RADS", i)] = 1.0;
    out.push_row(values, raw.y[i]);
  }
  return out;
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Inner bin edges at the 1/bins, ..., (bins-1)/bins empirical quantiles,
/// with duplicate edges removed.
inline std::vector<double> quantile_edges(std::vector<double> values, std::size_t bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < bins; ++k) {
    double e = quantile_sorted(values, static_cast<double>(k) / static_cast<double>(bins));
    if (e > values.front() && (edges.empty() || e > edges.back())) edges.push_back(e);
  }
  return edges;
}

/// Bin index = number of inner edges <= value.
inline std::size_t bin_of(double value, std::span<const double> edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

/// Replaces each named continuous column by one-hot indicators of its
/// equal-population quantile bins. The first bin's column is dropped, so the
/// resulting group has a reference level. Bin columns are named "<col> <k>".
inline Dataset quantile_discretize(const Dataset& data, const std::vector<std::string>& columns, std::size_t bins) {
  if (bins < 2) throw DiscretizeError("quantile_discretize: bins must be >= 2");
  if (data.empty()) throw DiscretizeError("quantile_discretize: empty dataset");
  std::map<std::size_t, std::vector<double>> edges;
  for (const auto& name : columns) {
    std::size_t j = data.schema.require(name);
    if (data.schema[j].kind != ColumnKind::continuous) {
      throw DiscretizeError("quantile_discretize: column '" + name + "' is not continuous");
    }
    auto e = quantile_edges(data.column(j), bins);
    if (e.empty()) throw DiscretizeError("quantile_discretize: column '" + name + "' is constant");
    edges[j] = std::move(e);
  }

  Dataset out;
  // source column -> (first output column, is_binned)
  std::vector<std::pair<std::size_t, bool>> layout;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    const Column& c = data.schema[j];
    std::size_t first = out.cols();
    if (auto it = edges.find(j); it != edges.end()) {
      std::vector<std::string> names;
      for (std::size_t k = 1; k <= it->second.size(); ++k) names.push_back(c.name + " " + std::to_string(k));
      out.schema.add_group(c.name, names, /*has_reference=*/true);
      layout.emplace_back(first, true);
    } else if (c.kind == ColumnKind::one_hot) {
      const auto& g = data.schema.groups()[static_cast<std::size_t>(c.group)];
      if (g.members.front() == j) {
        std::vector<std::string> names;
        for (auto m : g.members) names.push_back(data.schema[m].name);
        out.schema.add_group(g.name, names, g.has_reference);
      }
      layout.emplace_back(out.schema.require(c.name), false);
    } else {
      if (c.kind == ColumnKind::binary) out.schema.add_binary(c.name);
      else out.schema.add_continuous(c.name);
      layout.emplace_back(first, false);
    }
  }

  std::vector<double> values(out.cols());
  for (std::size_t i = 0; i < data.rows; ++i) {
    std::fill(values.begin(), values.end(), 0.0);
    for (std::size_t j = 0; j < data.cols(); ++j) {
      auto [dst, binned] = layout[j];
      if (binned) {
        std::size_t b = bin_of(data.at(i, j), edges[j]);
        if (b > 0) values[dst + b - 1] = 1.0;
      } else {
        values[dst] = data.at(i, j);
      }
    }
    out.push_row(values, data.y[i]);
  }
  return out;
}

/// Keeps only the named columns (and any one-hot group they belong to whole).
inline Dataset select_columns(const Dataset& data, const std::vector<std::string>& names) {
  Dataset out;
  std::vector<std::size_t> src;
  for (const auto& name : names) {
    std::size_t j = data.schema.require(name);
    const Column& c = data.schema[j];
    if (c.kind == ColumnKind::one_hot) throw SchemaError("select_columns: select one-hot groups by discretizing afterwards");
    if (c.kind == ColumnKind::binary) out.schema.add_binary(c.name);
    else out.schema.add_continuous(c.name);
    src.push_back(j);
  }
  std::vector<double> values(src.size());
  for (std::size_t i = 0; i < data.rows; ++i) {
    for (std::size_t k = 0; k < src.size(); ++k) values[k] = data.at(i, src[k]);
    out.push_row(values, data.y[i]);
  }
  return out;
}

}  // namespace distill
