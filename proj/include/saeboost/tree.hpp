#pragma once

#include <span>
#include <vector>

#include "saeboost/data.hpp"
#include "saeboost/hyperparams.hpp"

namespace sae::gbdt {

struct GradHess {
  std::vector<double> g;
  std::vector<double> h;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double weight = 0.0;  // only meaningful on leaves
  int left = -1;
  int right = -1;
  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(const double* x) const;
  int n_leaves() const;
};

struct SplitCandidate {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  double g_left = 0.0, h_left = 0.0;
  double g_right = 0.0, h_right = 0.0;
};

// Scan kernels: `parallel` fans the per-feature scans out over OpenMP
// threads and reduces in feature order, so both modes return the same
// candidate bit for bit.
enum class SplitSearch { parallel, serial };

// Exact greedy best split over the given rows and feature subset.
// Rows are scanned in the order given; pass them sorted for reproducible
// sums. Gain = 0.5*(GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma,
// candidate thresholds are midpoints between adjacent distinct values, a row
// goes left iff x[feature] < threshold. Ties prefer the lowest feature index,
// then the smallest threshold. Children must carry hessian mass of at least
// min_child_weight.
SplitCandidate find_best_split(const FeatureMatrix& x, const GradHess& gh,
                               std::span<const std::size_t> rows,
                               std::span<const int> features,
                               const Hyperparams& p,
                               SplitSearch mode = SplitSearch::parallel);

// Depth-limited recursive partitioning; a node becomes a leaf when the depth
// limit is reached, no positive-gain split exists, or a child would fall
// under min_child_weight. Leaf weight = -G/(H+lambda).
RegressionTree fit_tree(const FeatureMatrix& x, const GradHess& gh,
                        std::span<const std::size_t> rows,
                        std::span<const int> features, const Hyperparams& p,
                        SplitSearch mode = SplitSearch::parallel);

}  // namespace sae::gbdt
