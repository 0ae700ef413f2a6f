#pragma once

namespace sae {

// Boosting hyperparameters; defaults follow the model-based study settings.
struct Hyperparams {
  double eta = 0.01;
  int max_depth = 3;
  double min_child_weight = 3.0;
  double subsample = 0.5;
  double colsample_bytree = 1.0;
  double lambda = 1.0;  // L2 penalty on leaf weights
  double gamma = 0.9;   // minimum split gain
  int max_rounds = 500;
  int early_stop_patience = 50;
  double cv_fraction = 0.2;

  void validate() const;  // throws sae::Error on out-of-range values
};

}  // namespace sae
