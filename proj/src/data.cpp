#include "saeboost/data.hpp"

#include <cmath>

namespace sae {

int AreaIndex::add(const std::string& label) {
  auto it = id_of.find(label);
  if (it != id_of.end()) return it->second;
  int id = static_cast<int>(labels.size());
  labels.push_back(label);
  id_of.emplace(label, id);
  rows.emplace_back();
  return id;
}

int AreaIndex::find(const std::string& label) const {
  auto it = id_of.find(label);
  return it == id_of.end() ? -1 : it->second;
}

namespace {

void validate_frame(const FeatureMatrix& x, const AreaIndex& areas,
                    const std::vector<int>& area_of_row, const char* what) {
  if (x.values.size() != x.rows * x.cols)
    throw Error(std::string(what) + ": feature storage does not match rows*cols");
  if (area_of_row.size() != x.rows)
    throw Error(std::string(what) + ": area assignment size does not match rows");
  if (areas.n_areas() == 0 && x.rows > 0)
    throw Error(std::string(what) + ": rows present but no areas");
  std::size_t counted = 0;
  for (std::size_t d = 0; d < areas.n_areas(); ++d) {
    if (areas.rows[d].empty())
      throw Error(std::string(what) + ": area '" + areas.labels[d] + "' has no rows");
    for (std::size_t r : areas.rows[d]) {
      if (r >= x.rows || area_of_row[r] != static_cast<int>(d))
        throw Error(std::string(what) + ": inconsistent area row index");
      ++counted;
    }
  }
  if (counted != x.rows)
    throw Error(std::string(what) + ": area partition does not cover all rows");
  for (double v : x.values)
    if (!std::isfinite(v))
      throw Error(std::string(what) + ": non-finite covariate value");
}

}  // namespace

void SurveySample::validate() const {
  validate_frame(x, areas, area_of_row, "survey sample");
  if (y.size() != x.rows)
    throw Error("survey sample: response size does not match rows");
  for (double v : y)
    if (!std::isfinite(v)) throw Error("survey sample: non-finite response");
  if (!pi.empty()) {
    if (pi.size() != x.rows)
      throw Error("survey sample: inclusion probabilities size mismatch");
    for (double p : pi)
      if (!(p > 0.0 && p <= 1.0))
        throw Error("survey sample: inclusion probability outside (0, 1]");
  }
}

void CensusFrame::validate() const {
  validate_frame(x, areas, area_of_row, "census frame");
  if (!y.empty() && y.size() != x.rows)
    throw Error("census frame: response size does not match rows");
}

void check_feature_compat(const SurveySample& sample, const CensusFrame& census) {
  if (sample.n_features() != census.n_features())
    throw Error("sample has " + std::to_string(sample.n_features()) +
                " features but census has " + std::to_string(census.n_features()));
}

}  // namespace sae
