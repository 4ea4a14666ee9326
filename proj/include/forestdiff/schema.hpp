#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forestdiff/matrix.hpp"

namespace forestdiff {

enum class VariableKind { continuous, integer, categorical, binary };

std::string_view to_string(VariableKind kind);
VariableKind parse_variable_kind(std::string_view text);

struct Variable {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  // Ordered vocabulary; empty for continuous/integer variables.
  std::vector<std::string> categories;

  bool is_categorical() const {
    return kind == VariableKind::categorical || kind == VariableKind::binary;
  }

  friend bool operator==(const Variable&, const Variable&) = default;
};

struct TableSchema {
  std::vector<Variable> variables;
  std::optional<std::size_t> outcome_index;

  std::size_t size() const { return variables.size(); }
  std::optional<std::size_t> find(std::string_view name) const;

  // True when the outcome is categorical, which enables label conditioning.
  bool outcome_is_label() const {
    return outcome_index && variables[*outcome_index].is_categorical();
  }

  // Throws ValidationError on duplicate names, bad vocabularies or an
  // out-of-range outcome index.
  void validate() const;

  // Schema with the outcome column removed (no outcome designated).
  TableSchema without_outcome() const;

  friend bool operator==(const TableSchema&, const TableSchema&) = default;
};

// Mixed-type table. Numeric cells hold their value, categorical cells hold
// the category id, and missing cells hold kNotAValue.
class Dataset {
 public:
  Dataset() = default;
  Dataset(TableSchema schema, std::size_t n_rows);

  const TableSchema& schema() const { return schema_; }
  std::size_t rows() const { return cells_.rows(); }
  std::size_t cols() const { return cells_.cols(); }

  double operator()(std::size_t r, std::size_t c) const { return cells_(r, c); }
  double& operator()(std::size_t r, std::size_t c) { return cells_(r, c); }
  bool missing(std::size_t r, std::size_t c) const { return is_missing(cells_(r, c)); }
  std::size_t missing_count() const;

  const Matrix& cells() const { return cells_; }

  // Category ids within vocabulary, integral ids, n_rows >= 1.
  void validate() const;

  Dataset select_rows(std::span<const std::size_t> rows) const;
  Dataset drop_column(std::size_t column) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  TableSchema schema_;
  Matrix cells_;
};

// ---------------------------------------------------------------------------
// Raw text tables and ingestion
// ---------------------------------------------------------------------------

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Empty string, "NA" and "NaN" (any case) denote a missing cell.
bool is_na_token(std::string_view cell);

std::optional<double> parse_number(std::string_view cell);

// Shortest text that parses back to the same double.
std::string format_number(double value);

RawTable read_csv(const std::string& path);
RawTable parse_csv(std::string_view text);
void write_csv(const std::string& path, const RawTable& table);
std::string render_csv(const RawTable& table);

// Column kinds from cell contents. The outcome defaults to the last column.
TableSchema infer_schema(const RawTable& raw);

// Sidecar schema (JSON):
//   {"columns": [{"name": "x", "kind": "continuous"},
//                {"name": "y", "kind": "categorical", "categories": ["a","b"]}],
//    "outcome": "y"}
// "outcome" may be omitted or null.
TableSchema read_schema_file(const std::string& path);
TableSchema parse_schema_json(std::string_view text);
std::string schema_to_json(const TableSchema& schema);

// Converts text cells into a Dataset under `schema`. Columns are matched by
// header name.
Dataset to_dataset(const RawTable& raw, const TableSchema& schema);

// Renders a Dataset back to text cells (header in schema order).
RawTable to_raw(const Dataset& data);
std::string render_cell(const Variable& var, double value);

}  // namespace forestdiff
