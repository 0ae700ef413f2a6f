#pragma once

// Independent reference implementations used to pin down the library: dumb
// exhaustive or dense O(n^3) computations that are easy to eyeball.

#include <cstddef>
#include <span>
#include <vector>

#include "saeboost/data.hpp"
#include "saeboost/hyperparams.hpp"
#include "saeboost/tree.hpp"

namespace oracle {

// Exhaustive scan over every feature (in span order) and every midpoint
// between adjacent distinct values; same tie rules as the library kernel.
sae::gbdt::SplitCandidate best_split_exhaustive(
    const sae::FeatureMatrix& x, const sae::gbdt::GradHess& gh,
    std::span<const std::size_t> rows, std::span<const int> features,
    const sae::Hyperparams& p);

// Gaussian ML log-likelihood at fixed variances via an explicit dense
// V = se2 I + sv2 Z Z', with beta solved by dense GLS.
double dense_loglik(const std::vector<double>& y, const sae::FeatureMatrix& x_fixed,
                    const std::vector<int>& area_of_row, std::size_t n_areas,
                    double se2, double sv2,
                    std::vector<double>* beta_out = nullptr);

// Henderson mixed-model equations solved densely at fixed variances.
struct MmeSolution {
  std::vector<double> beta;
  std::vector<double> u;  // random intercepts per dense area id
};
MmeSolution solve_mme(const std::vector<double>& y, const sae::FeatureMatrix& x_fixed,
                      const std::vector<int>& area_of_row, std::size_t n_areas,
                      double se2, double sv2);

// Per-unit generalized loss written as the plain double loop.
double naive_gll(const std::vector<double>& y, const std::vector<double>& fhat,
                 double beta0, const std::vector<double>& vartheta,
                 const std::vector<int>& area_of_row, double se2, double sv2);

double mean_of(const std::vector<double>& v);
double variance_pop(const std::vector<double>& v);  // denominator n
double median_of(std::vector<double> v);

}  // namespace oracle
