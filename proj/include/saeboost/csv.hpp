#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "saeboost/data.hpp"

namespace sae {

// Column roles for survey / census CSV files. Covariate order here fixes
// the feature index order of the loaded matrix.
struct CsvSchema {
  std::string area_col = "area";
  std::string response_col = "y";  // may be empty for census frames
  std::vector<std::string> covariate_cols;
  std::string pi_col;  // empty = no inclusion probabilities
};

SurveySample load_survey_csv(const std::string& path, const CsvSchema& schema);
CensusFrame load_census_csv(const std::string& path, const CsvSchema& schema);

void write_survey_csv(const std::string& path, const SurveySample& s,
                      const CsvSchema& schema);

// RFC-4180 style parsing: quoted fields, embedded commas/quotes/newlines.
std::vector<std::vector<std::string>> read_csv_rows(std::istream& in,
                                                    const std::string& origin);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace sae
