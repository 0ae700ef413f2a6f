#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "saeboost/rng.hpp"
#include "saeboost/tree.hpp"

namespace sae::gbdt {

struct BoostedEnsemble {
  double base_score = 0.0;
  double eta = 0.0;
  int n_features = 0;
  int n_rounds_used = 0;  // == trees.size() after early-stop truncation
  std::vector<RegressionTree> trees;

  double predict_row(const double* x) const;
  std::vector<double> predict(const FeatureMatrix& x) const;
};

struct EarlyStopInfo {
  double best_holdout_rmse = 0.0;
  int best_round = 0;      // number of trees kept
  int rounds_trained = 0;  // trees grown before stopping
  std::vector<std::size_t> holdout_rows;
};

// Squared-loss boosting with a single random holdout of cv_fraction rows.
// base_score = mean(y); each round fits a tree to gradients on the training
// part with row/column subsampling, and the ensemble is truncated at the
// round with the best holdout RMSE.
BoostedEnsemble fit_boosted(const FeatureMatrix& x, const std::vector<double>& y,
                            const Hyperparams& p, Rng& rng,
                            SplitSearch mode = SplitSearch::parallel,
                            EarlyStopInfo* info = nullptr);

void serialize_ensemble(std::ostream& out, const BoostedEnsemble& e);
BoostedEnsemble parse_ensemble(std::istream& in, const std::string& origin);

}  // namespace sae::gbdt
