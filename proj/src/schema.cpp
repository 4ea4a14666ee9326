#include "forestdiff/schema.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "forestdiff/errors.hpp"
#include "json.hpp"

namespace forestdiff {

std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::continuous: return "continuous";
    case VariableKind::integer: return "integer";
    case VariableKind::categorical: return "categorical";
    case VariableKind::binary: return "binary";
  }
  return "continuous";
}

VariableKind parse_variable_kind(std::string_view text) {
  if (text == "continuous") return VariableKind::continuous;
  if (text == "integer") return VariableKind::integer;
  if (text == "categorical") return VariableKind::categorical;
  if (text == "binary") return VariableKind::binary;
  throw ValidationError("unknown variable kind '" + std::string(text) + "'");
}

std::optional<std::size_t> TableSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (variables[i].name == name) return i;
  return std::nullopt;
}

void TableSchema::validate() const {
  std::set<std::string> names;
  for (const auto& v : variables) {
    if (!names.insert(v.name).second)
      throw ValidationError("duplicate variable name '" + v.name + "'");
    if (v.is_categorical()) {
      if (v.categories.empty())
        throw ValidationError("categorical variable '" + v.name + "' has no categories");
      if (v.kind == VariableKind::binary && v.categories.size() != 2)
        throw ValidationError("binary variable '" + v.name + "' needs exactly 2 categories");
      std::set<std::string> seen(v.categories.begin(), v.categories.end());
      if (seen.size() != v.categories.size())
        throw ValidationError("variable '" + v.name + "' repeats a category");
    } else if (!v.categories.empty()) {
      throw ValidationError("numeric variable '" + v.name + "' cannot carry categories");
    }
  }
  if (outcome_index && *outcome_index >= variables.size())
    throw ValidationError("outcome index out of range");
}

TableSchema TableSchema::without_outcome() const {
  TableSchema out;
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (!outcome_index || i != *outcome_index) out.variables.push_back(variables[i]);
  return out;
}

// ---------------------------------------------------------------------------

Dataset::Dataset(TableSchema schema, std::size_t n_rows)
    : schema_(std::move(schema)), cells_(n_rows, schema_.size(), kNotAValue) {}

std::size_t Dataset::missing_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.values().begin(), cells_.values().end(),
                    [](double v) { return is_missing(v); }));
}

void Dataset::validate() const {
  schema_.validate();
  if (rows() == 0) throw ValidationError("dataset has no rows");
  for (std::size_t c = 0; c < cols(); ++c) {
    const Variable& var = schema_.variables[c];
    for (std::size_t r = 0; r < rows(); ++r) {
      const double v = cells_(r, c);
      if (is_missing(v)) continue;
      if (!std::isfinite(v))
        throw ValidationError("non-finite value in column '" + var.name + "'");
      if (var.is_categorical()) {
        if (v != std::floor(v) || v < 0 || v >= static_cast<double>(var.categories.size()))
          throw ValidationError("category id out of vocabulary in column '" + var.name + "'");
      }
    }
  }
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Dataset out(schema_, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = cells_.row(rows[i]);
    std::copy(src.begin(), src.end(), out.cells_.row(i).begin());
  }
  return out;
}

Dataset Dataset::drop_column(std::size_t column) const {
  TableSchema s;
  for (std::size_t i = 0; i < schema_.size(); ++i)
    if (i != column) s.variables.push_back(schema_.variables[i]);
  if (schema_.outcome_index && *schema_.outcome_index != column)
    s.outcome_index = *schema_.outcome_index - (*schema_.outcome_index > column ? 1 : 0);
  Dataset out(std::move(s), rows());
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t c = 0, k = 0; c < cols(); ++c)
      if (c != column) out.cells_(r, k++) = cells_(r, c);
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (!(a.schema_ == b.schema_) || !a.cells_.same_shape(b.cells_)) return false;
  auto av = a.cells_.values();
  auto bv = b.cells_.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (is_missing(av[i]) != is_missing(bv[i])) return false;
    if (!is_missing(av[i]) && av[i] != bv[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Text cells
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

bool is_na_token(std::string_view cell) {
  cell = trim(cell);
  return cell.empty() || iequals(cell, "NA") || iequals(cell, "NaN");
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

std::string format_number(double value) {
  if (value == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

RawTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n') {
      end_record();
    } else if (ch == '\r') {
      // tolerated before \n
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) throw ValidationError("unterminated quoted field in CSV");
  if (!field.empty() || !record.empty()) end_record();

  RawTable table;
  if (records.empty()) throw ValidationError("CSV has no header row");
  table.header = std::move(records.front());
  if (!table.header.empty() && table.header[0].starts_with("\xEF\xBB\xBF"))
    table.header[0].erase(0, 3);
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != table.header.size())
      throw ValidationError("CSV row " + std::to_string(i + 1) + " has " +
                            std::to_string(records[i].size()) + " fields, expected " +
                            std::to_string(table.header.size()));
    table.rows.push_back(std::move(records[i]));
  }
  return table;
}

RawTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return parse_csv(buffer.str());
}

namespace {

std::string quote_if_needed(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string render_csv(const RawTable& table) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out.push_back(',');
      out += quote_if_needed(rec[i]);
    }
    out.push_back('\n');
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

void write_csv(const std::string& path, const RawTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << render_csv(table);
  if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Schema inference and sidecar
// ---------------------------------------------------------------------------

TableSchema infer_schema(const RawTable& raw) {
  if (raw.header.empty() || raw.rows.empty()) throw ValidationError("empty table");
  TableSchema schema;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    Variable var;
    var.name = std::string(trim(raw.header[c]));
    bool any_text = false;
    bool all_integral = true;
    std::size_t observed = 0;
    std::set<std::string> vocabulary;
    for (const auto& row : raw.rows) {
      const std::string_view cell = row[c];
      if (is_na_token(cell)) continue;
      ++observed;
      vocabulary.insert(std::string(trim(cell)));
      if (auto v = parse_number(cell)) {
        if (*v != std::floor(*v)) all_integral = false;
      } else {
        any_text = true;
      }
    }
    if (observed == 0)
      throw ValidationError("column '" + var.name + "' has no non-missing cells");
    if (any_text) {
      var.categories.assign(vocabulary.begin(), vocabulary.end());
      var.kind = var.categories.size() == 2 ? VariableKind::binary : VariableKind::categorical;
    } else {
      var.kind = all_integral ? VariableKind::integer : VariableKind::continuous;
    }
    schema.variables.push_back(std::move(var));
  }
  schema.outcome_index = schema.variables.size() - 1;
  schema.validate();
  return schema;
}

TableSchema parse_schema_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema file is not valid JSON: ") + e.what());
  }
  TableSchema schema;
  try {
    for (const auto& col : doc.at("columns")) {
      Variable var;
      var.name = col.at("name").get<std::string>();
      var.kind = parse_variable_kind(col.at("kind").get<std::string>());
      if (col.contains("categories"))
        var.categories = col.at("categories").get<std::vector<std::string>>();
      schema.variables.push_back(std::move(var));
    }
    if (doc.contains("outcome") && !doc.at("outcome").is_null()) {
      const auto name = doc.at("outcome").get<std::string>();
      schema.outcome_index = schema.find(name);
      if (!schema.outcome_index)
        throw ValidationError("schema outcome '" + name + "' is not a column");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed schema file: ") + e.what());
  }
  schema.validate();
  return schema;
}

TableSchema read_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_schema_json(buffer.str());
}

std::string schema_to_json(const TableSchema& schema) {
  nlohmann::json doc;
  doc["columns"] = nlohmann::json::array();
  for (const auto& v : schema.variables) {
    nlohmann::json col{{"name", v.name}, {"kind", std::string(to_string(v.kind))}};
    if (v.is_categorical()) col["categories"] = v.categories;
    doc["columns"].push_back(std::move(col));
  }
  doc["outcome"] = schema.outcome_index
                       ? nlohmann::json(schema.variables[*schema.outcome_index].name)
                       : nlohmann::json(nullptr);
  return doc.dump(2);
}

Dataset to_dataset(const RawTable& raw, const TableSchema& schema) {
  schema.validate();
  if (raw.rows.empty()) throw ValidationError("empty table");
  std::vector<std::size_t> source(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = std::find_if(raw.header.begin(), raw.header.end(), [&](const std::string& h) {
      return trim(h) == schema.variables[c].name;
    });
    if (it == raw.header.end())
      throw ValidationError("column '" + schema.variables[c].name + "' missing from CSV");
    source[c] = static_cast<std::size_t>(it - raw.header.begin());
  }
  Dataset data(schema, raw.rows.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const Variable& var = schema.variables[c];
    std::map<std::string, std::size_t, std::less<>> ids;
    for (std::size_t k = 0; k < var.categories.size(); ++k) ids.emplace(var.categories[k], k);
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      const std::string_view cell = raw.rows[r][source[c]];
      if (is_na_token(cell)) continue;
      if (var.is_categorical()) {
        auto it = ids.find(trim(cell));
        if (it == ids.end())
          throw ValidationError("category '" + std::string(trim(cell)) +
                                "' not in vocabulary of '" + var.name + "'");
        data(r, c) = static_cast<double>(it->second);
      } else {
        auto v = parse_number(cell);
        if (!v)
          throw ValidationError("non-numeric cell '" + std::string(cell) + "' in column '" +
                                var.name + "'");
        data(r, c) = *v;
      }
    }
  }
  data.validate();
  return data;
}

std::string render_cell(const Variable& var, double value) {
  if (is_missing(value)) return "NA";
  if (var.is_categorical()) return var.categories.at(static_cast<std::size_t>(value));
  if (var.kind == VariableKind::integer) return format_number(std::round(value));
  return format_number(value);
}

RawTable to_raw(const Dataset& data) {
  RawTable raw;
  for (const auto& v : data.schema().variables) raw.header.push_back(v.name);
  raw.rows.resize(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    raw.rows[r].reserve(data.cols());
    for (std::size_t c = 0; c < data.cols(); ++c)
      raw.rows[r].push_back(render_cell(data.schema().variables[c], data(r, c)));
  }
  return raw;
}

}  // namespace forestdiff
