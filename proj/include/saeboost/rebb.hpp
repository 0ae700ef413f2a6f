#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "saeboost/megb.hpp"

namespace sae::rebb {

using megb::MegbModel;

// Donor pool for unit-level residual draws: pooled across areas (default)
// or restricted to the unit's own area.
enum class Level1Donors { pooled, per_area };

// Marginal residuals split into area means (level 2) and within-area
// remainders (level 1), each rescaled to the fitted variance and centered.
// Within-area remainders sum to exactly zero before scaling.
struct ResidualDecomposition {
  std::vector<double> level2_scaled;               // sampled-area dense order
  std::vector<std::vector<double>> level1_scaled;  // per sampled area
};

ResidualDecomposition decompose_residuals(const MegbModel& model,
                                          const SurveySample& sample);

// Sample-shaped error draws: one level-2 value per sampled area and n_d
// level-1 values per area, all with replacement from the decomposition.
struct ErrorDraws {
  std::vector<double> level2;               // per sampled area
  std::vector<std::vector<double>> level1;  // per sampled area, length n_d
};

ErrorDraws sample_bootstrap_errors(const ResidualDecomposition& dec,
                                   const SurveySample& sample, Rng& rng,
                                   Level1Donors donors = Level1Donors::pooled);

struct RebbOptions {
  Level1Donors donors = Level1Donors::pooled;
  bool parallel = true;
  std::function<void(int)> on_replicate;  // called once per finished replicate
};

struct BootstrapResult {
  int b = 0;
  std::vector<std::string> area_labels;  // census dense order
  std::vector<double> mse;               // per census area
  // replicate-level pairs in census-area-major order: [area][b] = (true mean
  // of the synthetic population, refitted estimate)
  std::vector<std::vector<double>> mu_true;
  std::vector<std::vector<double>> mu_hat;
};

// Random effect block bootstrap: per replicate build a synthetic census from
// fhat + beta0 plus resampled area/unit errors, redraw the original within-area
// sample sizes without replacement, refit with the model's own settings and
// score the area means against the synthetic truth.
BootstrapResult bootstrap_mse(const MegbModel& model, const SurveySample& sample,
                              const CensusFrame& census, int b, std::uint64_t seed,
                              const RebbOptions& opts = {});

// Plain-loop reference used to pin down the concurrent implementation.
BootstrapResult bootstrap_mse_serial(const MegbModel& model,
                                     const SurveySample& sample,
                                     const CensusFrame& census, int b,
                                     std::uint64_t seed,
                                     const RebbOptions& opts = {});

}  // namespace sae::rebb
