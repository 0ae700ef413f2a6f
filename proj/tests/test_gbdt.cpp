#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "saeboost/boosting.hpp"
#include "saeboost/rng.hpp"
#include "saeboost/tree.hpp"

using namespace sae;
using namespace sae::gbdt;

namespace {

FeatureMatrix matrix(std::size_t rows, std::size_t cols,
                     std::initializer_list<double> vals) {
  FeatureMatrix x;
  x.rows = rows;
  x.cols = cols;
  x.values = vals;
  return x;
}

FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                            int distinct = 0) {
  FeatureMatrix x;
  x.rows = rows;
  x.cols = cols;
  x.values.resize(rows * cols);
  for (double& v : x.values)
    v = distinct > 0 ? static_cast<double>(rng.uniform_index(distinct))
                     : rng.normal(0.0, 1.0);
  return x;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

// route rows to leaves and recompute -G/(H+lambda) per leaf
void check_leaf_weights(const RegressionTree& tree, const FeatureMatrix& x,
                        const GradHess& gh, std::span<const std::size_t> rows,
                        double lambda) {
  std::vector<std::vector<std::size_t>> at_node(tree.nodes.size());
  at_node[0].assign(rows.begin(), rows.end());
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const TreeNode& n = tree.nodes[id];
    if (n.is_leaf()) {
      double g = 0.0, h = 0.0;
      for (std::size_t r : at_node[id]) {
        g += gh.g[r];
        h += gh.h[r];
      }
      CHECK(n.weight == doctest::Approx(-g / (h + lambda)).epsilon(1e-12));
    } else {
      for (std::size_t r : at_node[id])
        (x.at(r, n.feature) < n.threshold ? at_node[n.left] : at_node[n.right])
            .push_back(r);
    }
  }
}

}  // namespace

TEST_CASE("equal gradients produce a single leaf with weight -g") {
  FeatureMatrix x = matrix(4, 1, {1, 2, 3, 4});
  GradHess gh{{2, 2, 2, 2}, {1, 1, 1, 1}};
  Hyperparams p;
  p.lambda = 0.0;
  p.gamma = 0.0;
  p.min_child_weight = 0.0;
  std::vector<int> feats = {0};
  RegressionTree t = fit_tree(x, gh, iota_rows(4), feats, p);
  REQUIRE(t.nodes.size() == 1);
  CHECK(t.nodes[0].is_leaf());
  CHECK(t.nodes[0].weight == -2.0);
}

TEST_CASE("first-round split of the 0/0/10/10 example matches the oracle") {
  FeatureMatrix x = matrix(4, 1, {1, 2, 3, 4});
  std::vector<double> y = {0, 0, 10, 10};
  double base = 5.0;
  GradHess gh;
  for (double yi : y) gh.g.push_back(base - yi);
  gh.h.assign(4, 1.0);
  Hyperparams p;
  p.lambda = 1.0;
  p.gamma = 0.0;
  p.min_child_weight = 0.0;
  p.max_depth = 1;
  std::vector<int> feats = {0};

  SplitCandidate got = find_best_split(x, gh, iota_rows(4), feats, p);
  SplitCandidate want = oracle::best_split_exhaustive(x, gh, iota_rows(4), feats, p);
  REQUIRE(got.valid);
  CHECK(got.feature == want.feature);
  CHECK(got.threshold == want.threshold);
  CHECK(got.threshold == 2.5);
  CHECK(got.gain == doctest::Approx(want.gain));

  RegressionTree t = fit_tree(x, gh, iota_rows(4), feats, p);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[t.nodes[0].left].weight == doctest::Approx(-10.0 / 3.0));
  CHECK(t.nodes[t.nodes[0].right].weight == doctest::Approx(10.0 / 3.0));
}

TEST_CASE("gamma above the best achievable gain forces a leaf") {
  FeatureMatrix x = matrix(4, 1, {1, 2, 3, 4});
  GradHess gh{{5, 5, -5, -5}, {1, 1, 1, 1}};
  Hyperparams p;
  p.lambda = 1.0;
  p.min_child_weight = 0.0;
  std::vector<int> feats = {0};

  p.gamma = 0.0;
  SplitCandidate open = find_best_split(x, gh, iota_rows(4), feats, p);
  REQUIRE(open.valid);
  p.gamma = open.gain + open.gain + 1.0;
  RegressionTree t = fit_tree(x, gh, iota_rows(4), feats, p);
  CHECK(t.nodes.size() == 1);
  CHECK(t.nodes[0].is_leaf());
}

TEST_CASE("random small trees match the exhaustive oracle everywhere") {
  for (int inst = 0; inst < 10; ++inst) {
    Rng rng(derive_seed(100, "gbdt-inst", inst));
    std::size_t n = 8 + rng.uniform_index(25);
    std::size_t p_cols = 1 + rng.uniform_index(3);
    FeatureMatrix x = random_matrix(n, p_cols, rng, inst % 2 ? 5 : 0);
    GradHess gh;
    gh.g.resize(n);
    gh.h.assign(n, 1.0);
    for (double& g : gh.g) g = rng.normal(0.0, 3.0);

    Hyperparams hp;
    hp.max_depth = 3;
    hp.min_child_weight = inst % 3 == 0 ? 2.0 : 0.0;
    hp.gamma = inst % 2 ? 0.1 : 0.0;
    std::vector<int> feats(p_cols);
    std::iota(feats.begin(), feats.end(), 0);
    auto rows = iota_rows(n);

    // verify the split at every internal node against the oracle
    RegressionTree tree = fit_tree(x, gh, rows, feats, hp);
    std::vector<std::vector<std::size_t>> at_node(tree.nodes.size());
    at_node[0] = rows;
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      const TreeNode& nd = tree.nodes[id];
      if (nd.is_leaf()) continue;
      SplitCandidate want =
          oracle::best_split_exhaustive(x, gh, at_node[id], feats, hp);
      REQUIRE(want.valid);
      CHECK(nd.feature == want.feature);
      CHECK(nd.threshold == want.threshold);
      for (std::size_t r : at_node[id])
        (x.at(r, nd.feature) < nd.threshold ? at_node[nd.left] : at_node[nd.right])
            .push_back(r);
    }
    check_leaf_weights(tree, x, gh, rows, hp.lambda);
  }
}

TEST_CASE("parallel and serial split search agree bit for bit") {
  Rng rng(55);
  FeatureMatrix x = random_matrix(200, 6, rng);
  GradHess gh;
  gh.g.resize(200);
  gh.h.assign(200, 1.0);
  for (double& g : gh.g) g = rng.normal(0.0, 1.0);
  Hyperparams p;
  p.min_child_weight = 1.0;
  p.gamma = 0.0;
  std::vector<int> feats = {0, 1, 2, 3, 4, 5};
  auto rows = iota_rows(200);

  SplitCandidate a = find_best_split(x, gh, rows, feats, p, SplitSearch::parallel);
  SplitCandidate b = find_best_split(x, gh, rows, feats, p, SplitSearch::serial);
  CHECK(a.valid == b.valid);
  CHECK(a.feature == b.feature);
  CHECK(a.threshold == b.threshold);
  CHECK(a.gain == b.gain);
  CHECK(a.g_left == b.g_left);
}

TEST_CASE("split ties prefer the lowest feature index then smallest threshold") {
  // two identical features; feature 0 must win
  FeatureMatrix x = matrix(4, 2, {1, 1, 2, 2, 3, 3, 4, 4});
  GradHess gh{{5, 5, -5, -5}, {1, 1, 1, 1}};
  Hyperparams p;
  p.gamma = 0.0;
  p.min_child_weight = 0.0;
  std::vector<int> feats = {0, 1};
  SplitCandidate c = find_best_split(x, gh, iota_rows(4), feats, p);
  REQUIRE(c.valid);
  CHECK(c.feature == 0);

  // symmetric gradients make both inner midpoints equal-gain; smallest wins
  FeatureMatrix x2 = matrix(4, 1, {1, 2, 3, 4});
  GradHess gh2{{5, -5, 5, -5}, {1, 1, 1, 1}};
  SplitCandidate c2 = find_best_split(x2, gh2, iota_rows(4), {feats.data(), 1}, p);
  REQUIRE(c2.valid);
  SplitCandidate w2 = oracle::best_split_exhaustive(x2, gh2, iota_rows(4),
                                                    {feats.data(), 1}, p);
  CHECK(c2.threshold == w2.threshold);
}

TEST_CASE("min_child_weight gates children by hessian mass") {
  FeatureMatrix x = matrix(4, 1, {1, 2, 3, 4});
  GradHess gh{{9, 1, -1, -9}, {1, 1, 1, 1}};
  Hyperparams p;
  p.gamma = 0.0;
  std::vector<int> feats = {0};
  p.min_child_weight = 2.0;  // outer midpoints leave a 1-row child
  SplitCandidate c = find_best_split(x, gh, iota_rows(4), feats, p);
  REQUIRE(c.valid);
  CHECK(c.threshold == 2.5);
  p.min_child_weight = 3.0;  // no split leaves 3 on both sides
  c = find_best_split(x, gh, iota_rows(4), feats, p);
  CHECK_FALSE(c.valid);
}

TEST_CASE("constant response yields base_score and an empty ensemble") {
  Rng rng(1);
  FeatureMatrix x = random_matrix(20, 2, rng);
  std::vector<double> y(20, 7.25);
  Hyperparams p;
  p.min_child_weight = 1.0;
  Rng fit_rng(derive_seed(2, "boost"));
  EarlyStopInfo info;
  BoostedEnsemble e = fit_boosted(x, y, p, fit_rng, SplitSearch::parallel, &info);
  CHECK(e.base_score == 7.25);
  CHECK(e.n_rounds_used == 0);
  CHECK(e.trees.empty());
  CHECK(info.best_holdout_rmse == 0.0);
  for (double v : e.predict(x)) CHECK(v == 7.25);
}

TEST_CASE("eta scales tree contributions; zero eta means base_score only") {
  BoostedEnsemble e;
  e.base_score = 3.0;
  e.eta = 0.0;
  e.n_features = 1;
  RegressionTree t;
  t.nodes.resize(3);
  t.nodes[0].feature = 0;
  t.nodes[0].threshold = 0.0;
  t.nodes[0].left = 1;
  t.nodes[0].right = 2;
  t.nodes[1].weight = -2.0;
  t.nodes[2].weight = 2.0;
  e.trees = {t};
  FeatureMatrix x = matrix(2, 1, {-1, 1});
  CHECK(e.predict(x) == std::vector<double>{3.0, 3.0});

  e.eta = 0.5;
  CHECK(e.predict(x) == std::vector<double>{2.0, 4.0});  // base +- 1

  e.trees.clear();
  CHECK(e.predict(x) == std::vector<double>{3.0, 3.0});
}

TEST_CASE("predict rejects mismatched feature dimension") {
  BoostedEnsemble e;
  e.base_score = 0.0;
  e.eta = 0.1;
  e.n_features = 2;
  FeatureMatrix x = matrix(1, 3, {0, 0, 0});
  CHECK_THROWS_AS(e.predict(x), Error);
}

TEST_CASE("re-run oracle with subsampling disabled reproduces the ensemble") {
  Rng data_rng(31);
  const std::size_t n = 20;
  FeatureMatrix x = random_matrix(n, 2, data_rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = x.at(i, 0) > 0 ? 10.0 : -10.0;  // separable

  Hyperparams p;
  p.eta = 0.3;
  p.max_rounds = 200;
  p.early_stop_patience = 10;
  p.subsample = 1.0;
  p.colsample_bytree = 1.0;
  p.gamma = 0.0;
  p.min_child_weight = 1.0;
  p.cv_fraction = 0.2;

  const std::uint64_t seed = derive_seed(77, "boost");
  Rng fit_rng(seed);
  EarlyStopInfo info;
  BoostedEnsemble e = fit_boosted(x, y, p, fit_rng, SplitSearch::parallel, &info);

  // replay the documented algorithm with the same stream
  Rng replay(seed);
  auto holdout = replay.sample_without_replacement(n, 4);
  std::sort(holdout.begin(), holdout.end());
  CHECK(holdout == info.holdout_rows);
  std::vector<char> in_holdout(n, 0);
  for (std::size_t r : holdout) in_holdout[r] = 1;
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < n; ++i)
    if (!in_holdout[i]) train.push_back(i);

  double base = 0.0;
  for (double v : y) base += v;
  base /= static_cast<double>(n);
  CHECK(base == e.base_score);

  std::vector<double> pred(n, base);
  GradHess gh;
  gh.g.assign(n, 0.0);
  gh.h.assign(n, 1.0);
  std::vector<int> feats = {0, 1};
  double prev_train_rmse = std::numeric_limits<double>::infinity();
  std::vector<RegressionTree> trees;

  for (int round = 1; round <= static_cast<int>(e.trees.size()); ++round) {
    for (std::size_t r : train) gh.g[r] = pred[r] - y[r];
    auto sub = replay.sample_without_replacement(train.size(), train.size());
    (void)sub;  // subsample=1 draws the whole set
    auto cols = replay.sample_without_replacement(2, 2);
    (void)cols;
    trees.push_back(fit_tree(x, gh, train, feats, p));
    for (std::size_t i = 0; i < n; ++i)
      pred[i] += p.eta * trees.back().predict_row(x.row(i));

    double ss = 0.0;
    for (std::size_t r : train) ss += (pred[r] - y[r]) * (pred[r] - y[r]);
    double train_rmse = std::sqrt(ss / static_cast<double>(train.size()));
    CHECK(train_rmse <= prev_train_rmse + 1e-12);  // monotone training loss
    prev_train_rmse = train_rmse;

    // identical tree structure and weights
    REQUIRE(trees.back().nodes.size() == e.trees[round - 1].nodes.size());
    for (std::size_t k = 0; k < trees.back().nodes.size(); ++k) {
      CHECK(trees.back().nodes[k].feature == e.trees[round - 1].nodes[k].feature);
      CHECK(trees.back().nodes[k].threshold == e.trees[round - 1].nodes[k].threshold);
      CHECK(trees.back().nodes[k].weight == e.trees[round - 1].nodes[k].weight);
    }
  }
  CHECK(e.n_rounds_used <= 200);
}

TEST_CASE("identical seeds give bit-identical ensembles, distinct seeds differ") {
  Rng data_rng(8);
  FeatureMatrix x = random_matrix(60, 3, data_rng);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i)
    y[i] = 2.0 * x.at(i, 0) - x.at(i, 1) + data_rng.normal(0, 0.1);
  Hyperparams p;
  p.max_rounds = 30;
  p.min_child_weight = 1.0;
  p.gamma = 0.0;

  auto dump = [&](std::uint64_t seed, SplitSearch mode) {
    Rng rng(seed);
    BoostedEnsemble e = fit_boosted(x, y, p, rng, mode);
    std::ostringstream os;
    serialize_ensemble(os, e);
    return os.str();
  };
  CHECK(dump(5, SplitSearch::parallel) == dump(5, SplitSearch::parallel));
  CHECK(dump(5, SplitSearch::parallel) == dump(5, SplitSearch::serial));
  CHECK(dump(5, SplitSearch::parallel) != dump(6, SplitSearch::parallel));
}

TEST_CASE("early stop info is consistent with the returned ensemble") {
  Rng data_rng(13);
  FeatureMatrix x = random_matrix(80, 2, data_rng);
  std::vector<double> y(80);
  for (std::size_t i = 0; i < 80; ++i)
    y[i] = std::sin(x.at(i, 0)) + data_rng.normal(0, 0.5);
  Hyperparams p;
  p.max_rounds = 120;
  p.early_stop_patience = 15;
  p.min_child_weight = 1.0;
  p.gamma = 0.0;

  Rng rng(21);
  EarlyStopInfo info;
  BoostedEnsemble e = fit_boosted(x, y, p, rng, SplitSearch::parallel, &info);
  CHECK(static_cast<int>(e.trees.size()) == info.best_round);
  CHECK(e.n_rounds_used == info.best_round);
  CHECK(info.rounds_trained >= info.best_round);
  CHECK(info.rounds_trained <= 120);
  CHECK(info.holdout_rows.size() == 16);  // llround(0.2 * 80)

  double ss = 0.0;
  for (std::size_t r : info.holdout_rows) {
    double d = e.predict_row(x.row(r)) - y[r];
    ss += d * d;
  }
  double rmse = std::sqrt(ss / 16.0);
  CHECK(rmse == doctest::Approx(info.best_holdout_rmse).epsilon(1e-9));
}

TEST_CASE("prediction envelope stays within the loose bound") {
  Rng data_rng(17);
  FeatureMatrix x = random_matrix(100, 2, data_rng);
  std::vector<double> y(100);
  for (std::size_t i = 0; i < 100; ++i)
    y[i] = 3.0 * x.at(i, 0) + data_rng.normal(0, 1.0);
  Hyperparams p;
  p.max_rounds = 60;
  p.min_child_weight = 1.0;
  p.gamma = 0.0;
  Rng rng(2);
  BoostedEnsemble e = fit_boosted(x, y, p, rng);

  double wmax = 0.0;
  for (const auto& t : e.trees)
    for (const auto& nd : t.nodes)
      if (nd.is_leaf()) wmax = std::max(wmax, std::abs(nd.weight));
  double ymin = *std::min_element(y.begin(), y.end());
  double ymax = *std::max_element(y.begin(), y.end());
  double slack = p.eta * static_cast<double>(e.trees.size()) * wmax;

  FeatureMatrix fresh = random_matrix(50, 2, data_rng);
  for (double v : e.predict(fresh)) {
    CHECK(v >= ymin - slack - 1e-9);
    CHECK(v <= ymax + slack + 1e-9);
  }
}

TEST_CASE("fit_boosted rejects degenerate inputs") {
  Hyperparams p;
  Rng rng(1);
  FeatureMatrix x = matrix(1, 1, {0});
  CHECK_THROWS_AS(fit_boosted(x, {1.0}, p, rng), Error);

  FeatureMatrix x2 = matrix(2, 1, {0, 1});
  // llround(0.2*2) = 0 leaves no holdout
  CHECK_THROWS_AS(fit_boosted(x2, {1.0, 2.0}, p, rng), Error);

  FeatureMatrix x3 = matrix(4, 1, {0, 1, 2, 3});
  std::vector<double> y3 = {0, 1, 2, 99};
  CHECK_THROWS_AS(fit_boosted(x3, {0, 1}, p, rng), Error);  // size mismatch
  CHECK_NOTHROW(fit_boosted(x3, y3, p, rng));
}

TEST_CASE("ensemble serialization round-trips bit for bit") {
  Rng data_rng(23);
  FeatureMatrix x = random_matrix(50, 3, data_rng);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i)
    y[i] = x.at(i, 0) * x.at(i, 1) + data_rng.normal(0, 0.2);
  Hyperparams p;
  p.max_rounds = 25;
  p.min_child_weight = 1.0;
  p.gamma = 0.0;
  Rng rng(4);
  BoostedEnsemble e = fit_boosted(x, y, p, rng);

  std::ostringstream os;
  serialize_ensemble(os, e);
  std::istringstream is(os.str());
  BoostedEnsemble back = parse_ensemble(is, "mem");
  CHECK(back.base_score == e.base_score);
  CHECK(back.eta == e.eta);
  CHECK(back.n_features == e.n_features);
  REQUIRE(back.trees.size() == e.trees.size());
  CHECK(back.predict(x) == e.predict(x));

  std::ostringstream os2;
  serialize_ensemble(os2, back);
  CHECK(os2.str() == os.str());
}

TEST_CASE("ensemble parser reports malformed input with line numbers") {
  auto reject = [](const std::string& text, const std::string& part) {
    std::istringstream is(text);
    bool thrown = false;
    try {
      parse_ensemble(is, "mem");
    } catch (const Error& e) {
      thrown = true;
      CHECK_MESSAGE(std::string(e.what()).find(part) != std::string::npos,
                    "message was: ", e.what());
    }
    CHECK(thrown);
  };
  reject("bogus\n", "ensemble v1");
  reject("ensemble v1\nbase_score 0\neta 0.1\nn_features 1\nn_trees 1\n"
         "tree 0 1\nnode 0 split 5 0.5 1 2\nend\n",
         "feature out of range");
  reject("ensemble v1\nbase_score 0\neta 0.1\nn_features 1\nn_trees 1\n"
         "tree 0 3\nnode 0 split 0 0.5 0 2\n",
         "child index");
  reject("ensemble v1\nbase_score 0\neta 0.1\nn_features 1\nn_trees 1\n",
         "end of ensemble block");
}
