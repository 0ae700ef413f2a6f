#include "saeboost/csv.hpp"

#include <fstream>
#include <sstream>

#include "saeboost/textio.hpp"

namespace sae {

std::vector<std::vector<std::string>> read_csv_rows(std::istream& in,
                                                    const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(fields));
    fields.clear();
    row_started = false;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          throw Error(origin + ":" + std::to_string(line) + ": stray quote inside field");
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        end_field();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        if (row_started || !field.empty() || !fields.empty()) end_row();
        break;
      default:
        field.push_back(c);
        row_started = true;
        break;
    }
  }
  if (in_quotes) throw Error(origin + ": unterminated quoted field");
  if (row_started || !field.empty() || !fields.empty()) end_row();
  return rows;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") != std::string::npos) {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

namespace {

struct ColumnMap {
  std::size_t area = 0;
  long response = -1;
  long pi = -1;
  std::vector<std::size_t> covariates;
};

ColumnMap resolve_columns(const std::vector<std::string>& header,
                          const CsvSchema& schema, bool need_response,
                          const std::string& origin) {
  for (std::size_t j = 0; j < header.size(); ++j)
    for (std::size_t k = j + 1; k < header.size(); ++k)
      if (trim(header[j]) == trim(header[k]) && !trim(header[j]).empty())
        throw Error(origin + ": duplicate header column '" +
                    std::string(trim(header[j])) + "'");

  auto find_col = [&](const std::string& name) -> long {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (std::string(trim(header[j])) == name) return static_cast<long>(j);
    return -1;
  };
  auto require_col = [&](const std::string& name, const char* role) {
    long j = find_col(name);
    if (j < 0)
      throw Error(origin + ": missing " + role + " column '" + name + "'");
    return static_cast<std::size_t>(j);
  };

  ColumnMap map;
  if (schema.area_col.empty()) throw Error(origin + ": area column name is empty");
  map.area = require_col(schema.area_col, "area");
  if (need_response) {
    if (schema.response_col.empty())
      throw Error(origin + ": response column name is empty");
    map.response = static_cast<long>(require_col(schema.response_col, "response"));
  } else if (!schema.response_col.empty()) {
    map.response = find_col(schema.response_col);
  }
  if (schema.covariate_cols.empty())
    throw Error(origin + ": no covariate columns given");
  for (const std::string& name : schema.covariate_cols)
    map.covariates.push_back(require_col(name, "covariate"));
  if (!schema.pi_col.empty())
    map.pi = static_cast<long>(require_col(schema.pi_col, "inclusion probability"));
  return map;
}

template <typename Frame>
void load_rows(Frame& frame, const std::vector<std::vector<std::string>>& rows,
               const ColumnMap& map, bool load_response, const std::string& origin) {
  std::size_t p = map.covariates.size();
  std::size_t n = rows.size() - 1;
  frame.x.rows = n;
  frame.x.cols = p;
  frame.x.values.reserve(n * p);
  frame.area_of_row.reserve(n);

  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    std::string where = origin + ": data row " + std::to_string(i);
    if (row.size() != rows[0].size())
      throw Error(where + ": has " + std::to_string(row.size()) + " fields, header has " +
                  std::to_string(rows[0].size()));
    std::string label(trim(row[map.area]));
    if (label.empty()) throw Error(where + ": empty area label");
    int id = frame.areas.add(label);
    frame.area_of_row.push_back(id);
    frame.areas.rows[id].push_back(i - 1);
    for (std::size_t j : map.covariates)
      frame.x.values.push_back(parse_double(row[j], where));
    if (load_response && map.response >= 0)
      frame.y.push_back(parse_double(row[static_cast<std::size_t>(map.response)], where));
  }
}

std::vector<std::vector<std::string>> read_file_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  auto rows = read_csv_rows(in, path);
  if (rows.empty()) throw Error(path + ": empty file");
  if (rows.size() < 2) throw Error(path + ": header only, no data rows");
  return rows;
}

}  // namespace

SurveySample load_survey_csv(const std::string& path, const CsvSchema& schema) {
  auto rows = read_file_rows(path);
  ColumnMap map = resolve_columns(rows[0], schema, true, path);

  SurveySample s;
  load_rows(s, rows, map, true, path);
  if (map.pi >= 0) {
    s.pi.reserve(rows.size() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i)
      s.pi.push_back(parse_double(rows[i][static_cast<std::size_t>(map.pi)],
                                  path + ": data row " + std::to_string(i)));
  }
  s.validate();
  return s;
}

CensusFrame load_census_csv(const std::string& path, const CsvSchema& schema) {
  auto rows = read_file_rows(path);
  ColumnMap map = resolve_columns(rows[0], schema, false, path);

  CensusFrame c;
  load_rows(c, rows, map, true, path);
  c.validate();
  return c;
}

void write_survey_csv(const std::string& path, const SurveySample& s,
                      const CsvSchema& schema) {
  s.validate();
  if (schema.covariate_cols.size() != s.n_features())
    throw Error("write_survey_csv: schema covariate count does not match sample");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");

  std::vector<std::string> fields;
  fields.push_back(schema.area_col);
  fields.push_back(schema.response_col);
  for (const auto& c : schema.covariate_cols) fields.push_back(c);
  bool with_pi = !schema.pi_col.empty() && !s.pi.empty();
  if (with_pi) fields.push_back(schema.pi_col);
  write_csv_row(out, fields);

  for (std::size_t i = 0; i < s.n_rows(); ++i) {
    fields.clear();
    fields.push_back(s.areas.labels[s.area_of_row[i]]);
    fields.push_back(format_double(s.y[i]));
    for (std::size_t j = 0; j < s.n_features(); ++j)
      fields.push_back(format_double(s.x.at(i, j)));
    if (with_pi) fields.push_back(format_double(s.pi[i]));
    write_csv_row(out, fields);
  }
  if (!out) throw Error("short write to '" + path + "'");
}

}  // namespace sae
