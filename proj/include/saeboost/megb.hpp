#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saeboost/boosting.hpp"
#include "saeboost/data.hpp"

namespace sae::megb {

struct EmConfig {
  double tol = 1e-4;  // relative generalized-loss change; +inf stops after one pass
  int iter_max = 100;

  void validate() const;
};

struct MegbModel {
  gbdt::BoostedEnsemble ensemble;
  double beta0 = 0.0;
  double sigma_eps2 = 0.0;
  double sigma_v2 = 0.0;
  std::vector<std::string> area_labels;  // sampled areas, training dense order
  std::vector<double> vartheta;          // aligned with area_labels
  std::vector<double> gll_trace;         // generalized loss after each pass
  int iterations = 0;
  bool converged = false;
  Hyperparams params;  // kept so bootstrap refits reuse the exact settings
  EmConfig em;

  // -1 when the label was not in the training sample
  int sampled_area_id(const std::string& label) const;
};

// Alternating fit: boosting on y - beta0 - Z vartheta, then a random-intercept
// model on y - fhat, repeated until the relative change of the generalized
// loss falls under em.tol or iter_max passes. The boosting rng is re-seeded
// deterministically per pass from `seed`.
MegbModel fit_megb(const SurveySample& sample, const Hyperparams& params,
                   const EmConfig& em, std::uint64_t seed,
                   gbdt::SplitSearch mode = gbdt::SplitSearch::parallel);

// Generalized loss sum_i [e_i^2/sigma_eps2 + vartheta_{d(i)}^2/sigma_v2
// + log sigma_v2 + log sigma_eps2] with e_i = y_i - fhat(x_i) - vartheta_{d(i)}
// - beta0; the vartheta terms drop when sigma_v2 == 0.
double gll(const MegbModel& model, const SurveySample& sample);

// Unit predictions fhat(x) + beta0 + vartheta_d (vartheta only where the
// census area was sampled).
std::vector<double> predict_units(const MegbModel& model, const CensusFrame& census);

// Census-mean aggregation of predict_units per area; totals are N_d times
// the means, exactly.
std::vector<double> area_means(const MegbModel& model, const CensusFrame& census);
std::vector<double> area_totals(const MegbModel& model, const CensusFrame& census);

void save_model(const std::string& path, const MegbModel& model);
MegbModel load_model(const std::string& path);

// Sequential one-parameter-at-a-time tuner; each step refits the boosting
// stage per candidate with an identical derived seed and keeps the candidate
// with the lowest holdout RMSE (first wins ties).
struct TuneGrid {
  std::vector<double> eta;
  std::vector<int> max_depth;
  std::vector<double> min_child_weight;
  std::vector<double> subsample;
  std::vector<double> colsample_bytree;
  std::vector<double> lambda;
  std::vector<double> gamma;
};

enum class TunableParam {
  eta,
  max_depth,
  min_child_weight,
  subsample,
  colsample_bytree,
  lambda,
  gamma,
};

struct TuneStep {
  TunableParam param;
  std::vector<double> candidates;
  std::vector<double> holdout_rmse;
  int chosen = 0;
};

TuneGrid default_tune_grid();
std::vector<TunableParam> default_tune_order();
const char* tunable_param_name(TunableParam p);

Hyperparams tune_sequential(const SurveySample& sample, const TuneGrid& grid,
                            std::span<const TunableParam> order,
                            const Hyperparams& start, std::uint64_t seed,
                            std::vector<TuneStep>* log = nullptr);

}  // namespace sae::megb
