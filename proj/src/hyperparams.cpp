#include "saeboost/hyperparams.hpp"

#include <string>

#include "saeboost/data.hpp"

namespace sae {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw Error("hyperparams: " + msg);
}

}  // namespace

void Hyperparams::validate() const {
  check(eta > 0.0 && eta <= 1.0, "eta must be in (0, 1]");
  check(max_depth >= 1, "max_depth must be >= 1");
  check(min_child_weight >= 0.0, "min_child_weight must be >= 0");
  check(subsample > 0.0 && subsample <= 1.0, "subsample must be in (0, 1]");
  check(colsample_bytree > 0.0 && colsample_bytree <= 1.0,
        "colsample_bytree must be in (0, 1]");
  check(lambda >= 0.0, "lambda must be >= 0");
  check(gamma >= 0.0, "gamma must be >= 0");
  check(max_rounds >= 1, "max_rounds must be >= 1");
  check(early_stop_patience >= 1, "early_stop_patience must be >= 1");
  check(cv_fraction > 0.0 && cv_fraction < 1.0, "cv_fraction must be in (0, 1)");
}

}  // namespace sae
