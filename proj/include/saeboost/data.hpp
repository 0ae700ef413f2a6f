#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major dense matrix of covariates.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  const double* row(std::size_t i) const { return values.data() + i * cols; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

// Opaque area labels mapped to dense ids in first-appearance order.
struct AreaIndex {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> id_of;
  std::vector<std::vector<std::size_t>> rows;  // row indices per area

  int add(const std::string& label);    // get-or-create
  int find(const std::string& label) const;  // -1 when absent
  std::size_t n_areas() const { return labels.size(); }
};

struct SurveySample {
  FeatureMatrix x;
  std::vector<double> y;
  std::vector<double> pi;  // inclusion probabilities, empty when absent
  AreaIndex areas;
  std::vector<int> area_of_row;

  std::size_t n_rows() const { return x.rows; }
  std::size_t n_features() const { return x.cols; }
  std::size_t n_d(int area) const { return areas.rows[area].size(); }
  void validate() const;
};

struct CensusFrame {
  FeatureMatrix x;
  std::vector<double> y;  // usually empty; simulations keep responses around
  AreaIndex areas;
  std::vector<int> area_of_row;

  std::size_t n_rows() const { return x.rows; }
  std::size_t n_features() const { return x.cols; }
  std::size_t n_d(int area) const { return areas.rows[area].size(); }
  void validate() const;
};

// Sample and census must describe the same covariate space.
void check_feature_compat(const SurveySample& sample, const CensusFrame& census);

}  // namespace sae
