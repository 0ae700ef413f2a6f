#pragma once

#include <cstddef>
#include <vector>

#include "saeboost/data.hpp"

namespace sae::lmm {

// Random-intercept model y = X beta + Z vartheta + eps fitted by maximum
// likelihood (not REML). Variances live on [0, inf); sigma_v2 may sit at
// the boundary 0, in which case beta reduces to OLS.
struct LmmFit {
  std::vector<double> beta;
  double sigma_eps2 = 0.0;
  double sigma_v2 = 0.0;
  std::vector<double> vartheta;  // BLUP per dense area id
  double loglik = 0.0;
  bool boundary = false;  // true when sigma_v2 was clamped to 0
};

// x_fixed must already contain any intercept column the caller wants.
LmmFit fit_ml(const std::vector<double>& y, const FeatureMatrix& x_fixed,
              const std::vector<int>& area_of_row, std::size_t n_areas);

// BLUP of the random intercepts at the fit's variance estimates:
// vartheta_d = n_d sigma_v2 / (sigma_eps2 + n_d sigma_v2) * mean_d(y - X beta).
std::vector<double> blup(const LmmFit& fit, const std::vector<double>& y,
                         const FeatureMatrix& x_fixed,
                         const std::vector<int>& area_of_row,
                         std::size_t n_areas);

// Profile log-likelihood at fixed variances (beta solved by GLS); exposed
// for diagnostics and tests.
double profile_loglik(const std::vector<double>& y, const FeatureMatrix& x_fixed,
                      const std::vector<int>& area_of_row, std::size_t n_areas,
                      double sigma_eps2, double sigma_v2,
                      std::vector<double>* beta_out = nullptr);

struct BhfResult {
  LmmFit fit;
  std::vector<double> area_means;  // census dense area order
  std::vector<bool> in_sample;     // same order
};

// Unit-level linear mixed model baseline: fixed part [1, x], area means
// predicted as Xbar_d beta + vartheta_d (vartheta omitted out of sample).
BhfResult bhf_area_means(const SurveySample& sample, const CensusFrame& census);

}  // namespace sae::lmm
