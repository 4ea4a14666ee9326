#pragma once

#include <cstddef>
#include <vector>

#include "forestdiff/matrix.hpp"
#include "forestdiff/schema.hpp"

namespace forestdiff {

// Encoded column → source variable (and category for dummy columns).
struct EncodedColumn {
  std::size_t variable = 0;
  int category = -1;  // -1 for numeric columns

  friend bool operator==(const EncodedColumn&, const EncodedColumn&) = default;
};

struct EncodedMatrix {
  Matrix values;  // kNotAValue marks a missing cell
  std::vector<EncodedColumn> columns;
};

struct VariableEncoding {
  VariableKind kind = VariableKind::continuous;
  double min = 0.0;
  double max = 0.0;
  bool degenerate = false;  // min == max (or no observed value)
  std::size_t offset = 0;   // first encoded column
  std::size_t width = 1;    // 1 for numeric, K-1 for a K-class categorical

  friend bool operator==(const VariableEncoding&, const VariableEncoding&) = default;
};

// Reversible map between a Dataset and its model-facing matrix:
// numeric variables are min-max scaled to [-1, 1], categoricals become K-1
// dummy columns with the first category as the all-zero reference.
class Encoder {
 public:
  Encoder() = default;
  Encoder(TableSchema schema, std::vector<VariableEncoding> variables);

  const TableSchema& schema() const { return schema_; }
  const std::vector<VariableEncoding>& variables() const { return variables_; }
  std::size_t width() const { return width_; }
  std::vector<EncodedColumn> column_map() const;

  friend bool operator==(const Encoder&, const Encoder&) = default;

 private:
  TableSchema schema_;
  std::vector<VariableEncoding> variables_;
  std::size_t width_ = 0;
};

Encoder fit_encoder(const Dataset& data);

// Throws ValidationError when `data` does not match the encoder's schema.
EncodedMatrix encode(const Encoder& enc, const Dataset& data);

// Clips numeric columns to [-1, 1], rounds integers, and maps each dummy
// block to the nearest class vector (squared distance, lowest index on ties).
Dataset decode(const Encoder& enc, const Matrix& m);

}  // namespace forestdiff
