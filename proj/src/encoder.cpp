#include "forestdiff/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "forestdiff/errors.hpp"

namespace forestdiff {

Encoder::Encoder(TableSchema schema, std::vector<VariableEncoding> variables)
    : schema_(std::move(schema)), variables_(std::move(variables)) {
  if (variables_.size() != schema_.size())
    throw ValidationError("encoder variable count does not match schema");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].offset != offset)
      throw ValidationError("encoder column offsets are not contiguous");
    offset += variables_[i].width;
  }
  width_ = offset;
}

std::vector<EncodedColumn> Encoder::column_map() const {
  std::vector<EncodedColumn> cols;
  cols.reserve(width_);
  for (std::size_t v = 0; v < variables_.size(); ++v) {
    if (schema_.variables[v].is_categorical()) {
      for (std::size_t k = 0; k < variables_[v].width; ++k)
        cols.push_back({v, static_cast<int>(k + 1)});
    } else {
      cols.push_back({v, -1});
    }
  }
  return cols;
}

Encoder fit_encoder(const Dataset& data) {
  const TableSchema& schema = data.schema();
  std::vector<VariableEncoding> vars(schema.size());
  std::size_t offset = 0;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const Variable& var = schema.variables[c];
    VariableEncoding& e = vars[c];
    e.kind = var.kind;
    e.offset = offset;
    if (var.is_categorical()) {
      e.width = var.categories.size() - 1;
    } else {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t r = 0; r < data.rows(); ++r) {
        if (data.missing(r, c)) continue;
        lo = std::min(lo, data(r, c));
        hi = std::max(hi, data(r, c));
      }
      if (lo > hi) lo = hi = 0.0;
      e.min = lo;
      e.max = hi;
      e.degenerate = !(hi > lo);
      e.width = 1;
    }
    offset += e.width;
  }
  return Encoder(schema, std::move(vars));
}

EncodedMatrix encode(const Encoder& enc, const Dataset& data) {
  if (!(data.schema().variables == enc.schema().variables))
    throw ValidationError("dataset schema does not match encoder schema");
  EncodedMatrix out{Matrix(data.rows(), enc.width(), 0.0), enc.column_map()};
  const auto& vars = enc.variables();
  for (std::size_t r = 0; r < data.rows(); ++r) {
    auto row = out.values.row(r);
    for (std::size_t c = 0; c < vars.size(); ++c) {
      const VariableEncoding& e = vars[c];
      const double x = data(r, c);
      if (is_missing(x)) {
        std::fill_n(row.begin() + static_cast<std::ptrdiff_t>(e.offset), e.width, kNotAValue);
        continue;
      }
      if (e.kind == VariableKind::categorical || e.kind == VariableKind::binary) {
        const auto id = static_cast<std::size_t>(x);
        if (x < 0 || id > e.width || x != std::floor(x))
          throw ValidationError("category id not in vocabulary of '" +
                                enc.schema().variables[c].name + "'");
        if (id > 0) row[e.offset + id - 1] = 1.0;
      } else if (e.degenerate) {
        row[e.offset] = 0.0;
      } else {
        row[e.offset] = 2.0 * (x - e.min) / (e.max - e.min) - 1.0;
      }
    }
  }
  return out;
}

Dataset decode(const Encoder& enc, const Matrix& m) {
  if (m.cols() != enc.width()) throw ValidationError("encoded width mismatch in decode");
  Dataset out(enc.schema(), m.rows());
  const auto& vars = enc.variables();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < vars.size(); ++c) {
      const VariableEncoding& e = vars[c];
      if (e.kind == VariableKind::categorical || e.kind == VariableKind::binary) {
        // |d - 0|^2 for the reference; |d - e_k|^2 = |d|^2 - 2 d_k + 1 otherwise.
        double norm2 = 0.0;
        for (std::size_t k = 0; k < e.width; ++k) {
          const double d = is_missing(row[e.offset + k]) ? 0.0 : row[e.offset + k];
          norm2 += d * d;
        }
        std::size_t best = 0;
        double best_dist = norm2;
        for (std::size_t k = 0; k < e.width; ++k) {
          const double d = is_missing(row[e.offset + k]) ? 0.0 : row[e.offset + k];
          const double dist = norm2 - 2.0 * d + 1.0;
          if (dist < best_dist) {
            best_dist = dist;
            best = k + 1;
          }
        }
        out(r, c) = static_cast<double>(best);
        continue;
      }
      if (e.degenerate) {
        out(r, c) = e.min;
        continue;
      }
      double v = row[e.offset];
      if (is_missing(v)) v = 0.0;
      v = std::clamp(v, -1.0, 1.0);
      double x = e.min + (v + 1.0) * 0.5 * (e.max - e.min);
      x = std::clamp(x, e.min, e.max);
      if (e.kind == VariableKind::integer) x = std::round(x);
      out(r, c) = x;
    }
  }
  return out;
}

}  // namespace forestdiff
