#include "saeboost/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "saeboost/textio.hpp"

namespace sae::gbdt {

double BoostedEnsemble::predict_row(const double* x) const {
  double acc = 0.0;
  for (const RegressionTree& t : trees) acc += t.predict_row(x);
  return base_score + eta * acc;
}

std::vector<double> BoostedEnsemble::predict(const FeatureMatrix& x) const {
  if (static_cast<int>(x.cols) != n_features)
    throw Error("predict: input has " + std::to_string(x.cols) +
                " features, model was trained with " + std::to_string(n_features));
  std::vector<double> out(x.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(x.rows); ++i)
    out[i] = predict_row(x.row(i));
  return out;
}

namespace {

double rmse_over(const std::vector<double>& pred, const std::vector<double>& y,
                 const std::vector<std::size_t>& rows) {
  double ss = 0.0;
  for (std::size_t r : rows) {
    double e = pred[r] - y[r];
    ss += e * e;
  }
  return std::sqrt(ss / static_cast<double>(rows.size()));
}

}  // namespace

BoostedEnsemble fit_boosted(const FeatureMatrix& x, const std::vector<double>& y,
                            const Hyperparams& p, Rng& rng, SplitSearch mode,
                            EarlyStopInfo* info) {
  p.validate();
  if (x.rows != y.size()) throw Error("fit_boosted: response size does not match rows");
  if (x.rows < 2) throw Error("fit_boosted: need at least 2 rows");
  if (x.cols < 1) throw Error("fit_boosted: need at least 1 feature");

  const std::size_t n = x.rows;
  const auto n_holdout =
      static_cast<std::size_t>(std::llround(p.cv_fraction * static_cast<double>(n)));
  if (n_holdout < 1 || n - n_holdout < 1)
    throw Error("fit_boosted: cv split would leave an empty side");

  std::vector<std::size_t> holdout = rng.sample_without_replacement(n, n_holdout);
  std::sort(holdout.begin(), holdout.end());
  std::vector<char> is_holdout(n, 0);
  for (std::size_t r : holdout) is_holdout[r] = 1;
  std::vector<std::size_t> train;
  train.reserve(n - n_holdout);
  for (std::size_t i = 0; i < n; ++i)
    if (!is_holdout[i]) train.push_back(i);

  const double base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  BoostedEnsemble ens;
  ens.base_score = base;
  ens.eta = p.eta;
  ens.n_features = static_cast<int>(x.cols);

  std::vector<double> pred(n, base);
  GradHess gh;
  gh.g.assign(n, 0.0);
  gh.h.assign(n, 1.0);

  const auto m_rows = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(p.subsample * static_cast<double>(train.size()))));
  const auto m_cols = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(p.colsample_bytree * static_cast<double>(x.cols))));

  double best_rmse = rmse_over(pred, y, holdout);
  int best_round = 0;
  int since_improved = 0;
  int rounds = 0;

  for (int round = 1; round <= p.max_rounds; ++round) {
    for (std::size_t r : train) gh.g[r] = pred[r] - y[r];

    std::vector<std::size_t> sub = rng.sample_without_replacement(train.size(), m_rows);
    for (std::size_t& s : sub) s = train[s];
    std::sort(sub.begin(), sub.end());

    std::vector<std::size_t> col_draw = rng.sample_without_replacement(x.cols, m_cols);
    std::sort(col_draw.begin(), col_draw.end());
    std::vector<int> cols(col_draw.begin(), col_draw.end());

    ens.trees.push_back(fit_tree(x, gh, sub, cols, p, mode));
    const RegressionTree& tree = ens.trees.back();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i)
      pred[i] += p.eta * tree.predict_row(x.row(i));

    rounds = round;
    double cur = rmse_over(pred, y, holdout);
    if (cur < best_rmse) {
      best_rmse = cur;
      best_round = round;
      since_improved = 0;
    } else if (++since_improved >= p.early_stop_patience) {
      break;
    }
  }

  ens.trees.resize(best_round);
  ens.n_rounds_used = best_round;

  if (info) {
    info->best_holdout_rmse = best_rmse;
    info->best_round = best_round;
    info->rounds_trained = rounds;
    info->holdout_rows = std::move(holdout);
  }
  return ens;
}

void serialize_ensemble(std::ostream& out, const BoostedEnsemble& e) {
  out << "ensemble v1\n";
  out << "base_score " << format_double(e.base_score) << '\n';
  out << "eta " << format_double(e.eta) << '\n';
  out << "n_features " << e.n_features << '\n';
  out << "n_trees " << e.trees.size() << '\n';
  for (std::size_t t = 0; t < e.trees.size(); ++t) {
    const RegressionTree& tree = e.trees[t];
    out << "tree " << t << ' ' << tree.nodes.size() << '\n';
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const TreeNode& n = tree.nodes[i];
      if (n.is_leaf()) {
        out << "node " << i << " leaf " << format_double(n.weight) << '\n';
      } else {
        out << "node " << i << " split " << n.feature << ' '
            << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << '\n';
      }
    }
  }
  out << "end\n";
}

namespace {

std::vector<std::string> next_line_fields(std::istream& in, const std::string& origin,
                                          std::size_t& lineno) {
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (!fields.empty()) return fields;
  }
  throw Error(origin + ": unexpected end of ensemble block");
}

[[noreturn]] void bad_line(const std::string& origin, std::size_t lineno,
                           const std::string& what) {
  throw Error(origin + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

BoostedEnsemble parse_ensemble(std::istream& in, const std::string& origin) {
  std::size_t lineno = 0;
  auto fields = next_line_fields(in, origin, lineno);
  if (fields.size() != 2 || fields[0] != "ensemble" || fields[1] != "v1")
    bad_line(origin, lineno, "expected 'ensemble v1' header");

  auto expect_kv = [&](const char* key) {
    auto f = next_line_fields(in, origin, lineno);
    if (f.size() != 2 || f[0] != key)
      bad_line(origin, lineno, std::string("expected '") + key + " <value>'");
    return f[1];
  };

  BoostedEnsemble e;
  e.base_score = parse_double(expect_kv("base_score"), origin);
  e.eta = parse_double(expect_kv("eta"), origin);
  e.n_features = static_cast<int>(parse_long(expect_kv("n_features"), origin));
  long n_trees = parse_long(expect_kv("n_trees"), origin);
  if (e.n_features < 1) bad_line(origin, lineno, "n_features must be positive");
  if (n_trees < 0) bad_line(origin, lineno, "negative tree count");

  for (long t = 0; t < n_trees; ++t) {
    fields = next_line_fields(in, origin, lineno);
    if (fields.size() != 3 || fields[0] != "tree" ||
        parse_long(fields[1], origin) != t)
      bad_line(origin, lineno, "expected 'tree " + std::to_string(t) + " <nodes>'");
    long n_nodes = parse_long(fields[2], origin);
    if (n_nodes < 1) bad_line(origin, lineno, "tree must have at least one node");

    RegressionTree tree;
    tree.nodes.resize(static_cast<std::size_t>(n_nodes));
    for (long i = 0; i < n_nodes; ++i) {
      fields = next_line_fields(in, origin, lineno);
      if (fields.size() < 4 || fields[0] != "node" ||
          parse_long(fields[1], origin) != i)
        bad_line(origin, lineno, "expected 'node " + std::to_string(i) + " ...'");
      TreeNode& node = tree.nodes[static_cast<std::size_t>(i)];
      if (fields[2] == "leaf" && fields.size() == 4) {
        node.weight = parse_double(fields[3], origin);
      } else if (fields[2] == "split" && fields.size() == 7) {
        node.feature = static_cast<int>(parse_long(fields[3], origin));
        node.threshold = parse_double(fields[4], origin);
        node.left = static_cast<int>(parse_long(fields[5], origin));
        node.right = static_cast<int>(parse_long(fields[6], origin));
        if (node.feature < 0 || node.feature >= e.n_features)
          bad_line(origin, lineno, "split feature out of range");
        if (node.left <= i || node.right <= i || node.left >= n_nodes ||
            node.right >= n_nodes)
          bad_line(origin, lineno, "child index out of range");
      } else {
        bad_line(origin, lineno, "malformed node line");
      }
    }
    e.trees.push_back(std::move(tree));
  }
  fields = next_line_fields(in, origin, lineno);
  if (fields.size() != 1 || fields[0] != "end")
    bad_line(origin, lineno, "expected 'end'");
  e.n_rounds_used = static_cast<int>(e.trees.size());
  return e;
}

}  // namespace sae::gbdt
