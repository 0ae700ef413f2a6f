#include "saeboost/tree.hpp"

#include <algorithm>
#include <cmath>

namespace sae::gbdt {

double RegressionTree::predict_row(const double* x) const {
  int id = 0;
  while (!nodes[id].is_leaf()) {
    const TreeNode& n = nodes[id];
    id = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return nodes[id].weight;
}

int RegressionTree::n_leaves() const {
  int k = 0;
  for (const TreeNode& n : nodes)
    if (n.is_leaf()) ++k;
  return k;
}

namespace {

struct Entry {
  double value;
  double g;
  double h;
};

// Best split of one feature; rows are scanned in sorted value order with
// the incoming row order breaking value ties, so repeated calls sum in the
// same order.
SplitCandidate scan_feature(const FeatureMatrix& x, const GradHess& gh,
                            std::span<const std::size_t> rows, int feature,
                            const Hyperparams& p, double g_total, double h_total,
                            std::vector<Entry>& buf) {
  buf.clear();
  buf.reserve(rows.size());
  for (std::size_t r : rows) buf.push_back({x.at(r, feature), gh.g[r], gh.h[r]});
  std::stable_sort(buf.begin(), buf.end(),
                   [](const Entry& a, const Entry& b) { return a.value < b.value; });

  SplitCandidate best;
  const double parent = g_total * g_total / (h_total + p.lambda);
  double gl = 0.0, hl = 0.0;
  for (std::size_t i = 0; i + 1 < buf.size(); ++i) {
    gl += buf[i].g;
    hl += buf[i].h;
    if (!(buf[i].value < buf[i + 1].value)) continue;
    double thr = buf[i].value + (buf[i + 1].value - buf[i].value) / 2.0;
    if (!(buf[i].value < thr)) continue;  // adjacent representable values
    double gr = g_total - gl;
    double hr = h_total - hl;
    if (hl < p.min_child_weight || hr < p.min_child_weight) continue;
    double gain =
        0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - parent) - p.gamma;
    if (gain > 0.0 && (!best.valid || gain > best.gain)) {
      best.valid = true;
      best.feature = feature;
      best.threshold = thr;
      best.gain = gain;
      best.g_left = gl;
      best.h_left = hl;
      best.g_right = gr;
      best.h_right = hr;
    }
  }
  return best;
}

}  // namespace

SplitCandidate find_best_split(const FeatureMatrix& x, const GradHess& gh,
                               std::span<const std::size_t> rows,
                               std::span<const int> features, const Hyperparams& p,
                               SplitSearch mode) {
  if (rows.empty()) throw Error("find_best_split: no rows");
  if (features.empty()) throw Error("find_best_split: no features");

  double g_total = 0.0, h_total = 0.0;
  for (std::size_t r : rows) {
    g_total += gh.g[r];
    h_total += gh.h[r];
  }

  std::vector<SplitCandidate> per_feature(features.size());
  if (mode == SplitSearch::parallel) {
#pragma omp parallel
    {
      std::vector<Entry> buf;
#pragma omp for schedule(static)
      for (long k = 0; k < static_cast<long>(features.size()); ++k)
        per_feature[k] =
            scan_feature(x, gh, rows, features[k], p, g_total, h_total, buf);
    }
  } else {
    std::vector<Entry> buf;
    for (std::size_t k = 0; k < features.size(); ++k)
      per_feature[k] = scan_feature(x, gh, rows, features[k], p, g_total, h_total, buf);
  }

  // reduce in feature order; strict > keeps the lowest feature index on ties
  SplitCandidate best;
  for (const SplitCandidate& c : per_feature)
    if (c.valid && (!best.valid || c.gain > best.gain)) best = c;
  return best;
}

namespace {

struct TreeBuilder {
  const FeatureMatrix& x;
  const GradHess& gh;
  std::span<const int> features;
  const Hyperparams& p;
  SplitSearch mode;
  RegressionTree tree;

  int build(std::vector<std::size_t>& rows, int depth) {
    double g = 0.0, h = 0.0;
    for (std::size_t r : rows) {
      g += gh.g[r];
      h += gh.h[r];
    }
    int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    SplitCandidate c;
    if (depth < p.max_depth)
      c = find_best_split(x, gh, rows, features, p, mode);
    if (!c.valid) {
      tree.nodes[id].weight = -g / (h + p.lambda);
      return id;
    }

    std::vector<std::size_t> left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    for (std::size_t r : rows)
      (x.at(r, c.feature) < c.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[id].feature = c.feature;
    tree.nodes[id].threshold = c.threshold;
    tree.nodes[id].left = build(left, depth + 1);
    tree.nodes[id].right = build(right, depth + 1);
    return id;
  }
};

}  // namespace

RegressionTree fit_tree(const FeatureMatrix& x, const GradHess& gh,
                        std::span<const std::size_t> rows,
                        std::span<const int> features, const Hyperparams& p,
                        SplitSearch mode) {
  p.validate();
  if (rows.empty()) throw Error("fit_tree: no rows");
  if (features.empty()) throw Error("fit_tree: no features");
  if (gh.g.size() != x.rows || gh.h.size() != x.rows)
    throw Error("fit_tree: gradient size does not match rows");

  TreeBuilder b{x, gh, features, p, mode, {}};
  std::vector<std::size_t> root_rows(rows.begin(), rows.end());
  b.build(root_rows, 0);
  return b.tree;
}

}  // namespace sae::gbdt
