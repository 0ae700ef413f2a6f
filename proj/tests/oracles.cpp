#include "oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace oracle {

sae::gbdt::SplitCandidate best_split_exhaustive(
    const sae::FeatureMatrix& x, const sae::gbdt::GradHess& gh,
    std::span<const std::size_t> rows, std::span<const int> features,
    const sae::Hyperparams& p) {
  double g_total = 0.0, h_total = 0.0;
  for (std::size_t r : rows) {
    g_total += gh.g[r];
    h_total += gh.h[r];
  }
  double parent = g_total * g_total / (h_total + p.lambda);

  sae::gbdt::SplitCandidate best;
  for (int f : features) {
    std::set<double> distinct;
    for (std::size_t r : rows) distinct.insert(x.at(r, f));
    std::vector<double> vals(distinct.begin(), distinct.end());
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      double thr = vals[i] + (vals[i + 1] - vals[i]) / 2.0;
      if (!(vals[i] < thr)) continue;
      double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
      for (std::size_t r : rows) {
        if (x.at(r, f) < thr) {
          gl += gh.g[r];
          hl += gh.h[r];
        } else {
          gr += gh.g[r];
          hr += gh.h[r];
        }
      }
      if (hl < p.min_child_weight || hr < p.min_child_weight) continue;
      double gain =
          0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - parent) -
          p.gamma;
      if (gain > 0.0 && (!best.valid || gain > best.gain)) {
        best.valid = true;
        best.feature = f;
        best.threshold = thr;
        best.gain = gain;
        best.g_left = gl;
        best.h_left = hl;
        best.g_right = gr;
        best.h_right = hr;
      }
    }
  }
  return best;
}

namespace {

Eigen::MatrixXd dense_v(const std::vector<int>& area_of_row, std::size_t n,
                        double se2, double sv2) {
  Eigen::MatrixXd v = se2 * Eigen::MatrixXd::Identity(static_cast<long>(n),
                                                      static_cast<long>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (area_of_row[i] == area_of_row[j]) v(i, j) += sv2;
  return v;
}

}  // namespace

double dense_loglik(const std::vector<double>& y, const sae::FeatureMatrix& x_fixed,
                    const std::vector<int>& area_of_row, std::size_t,
                    double se2, double sv2, std::vector<double>* beta_out) {
  const std::size_t n = y.size();
  Eigen::MatrixXd v = dense_v(area_of_row, n, se2, sv2);
  Eigen::LLT<Eigen::MatrixXd> llt(v);

  Eigen::MatrixXd x(static_cast<long>(n), static_cast<long>(x_fixed.cols));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < x_fixed.cols; ++j) x(i, j) = x_fixed.at(i, j);
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<long>(n));

  Eigen::MatrixXd vinv_x = llt.solve(x);
  Eigen::VectorXd vinv_y = llt.solve(yv);
  Eigen::MatrixXd xtvx = x.transpose() * vinv_x;
  Eigen::VectorXd beta = xtvx.ldlt().solve(x.transpose() * vinv_y);
  if (beta_out) beta_out->assign(beta.data(), beta.data() + beta.size());

  Eigen::VectorXd r = yv - x * beta;
  double quad = r.dot(llt.solve(r));
  double logdet = 0.0;
  for (long i = 0; i < llt.matrixL().rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet +
                 quad);
}

MmeSolution solve_mme(const std::vector<double>& y, const sae::FeatureMatrix& x_fixed,
                      const std::vector<int>& area_of_row, std::size_t n_areas,
                      double se2, double sv2) {
  const std::size_t n = y.size();
  const std::size_t p = x_fixed.cols;
  const std::size_t m = p + n_areas;

  Eigen::MatrixXd x(static_cast<long>(n), static_cast<long>(p));
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(static_cast<long>(n),
                                            static_cast<long>(n_areas));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, j) = x_fixed.at(i, j);
    z(static_cast<long>(i), area_of_row[i]) = 1.0;
  }
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<long>(n));

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<long>(m),
                                            static_cast<long>(m));
  Eigen::VectorXd b(static_cast<long>(m));
  a.topLeftCorner(p, p) = x.transpose() * x / se2;
  a.topRightCorner(p, n_areas) = x.transpose() * z / se2;
  a.bottomLeftCorner(n_areas, p) = z.transpose() * x / se2;
  a.bottomRightCorner(n_areas, n_areas) =
      z.transpose() * z / se2 +
      Eigen::MatrixXd::Identity(static_cast<long>(n_areas),
                                static_cast<long>(n_areas)) /
          sv2;
  b.head(p) = x.transpose() * yv / se2;
  b.tail(n_areas) = z.transpose() * yv / se2;

  Eigen::VectorXd sol = a.ldlt().solve(b);
  MmeSolution out;
  out.beta.assign(sol.data(), sol.data() + p);
  out.u.assign(sol.data() + p, sol.data() + m);
  return out;
}

double naive_gll(const std::vector<double>& y, const std::vector<double>& fhat,
                 double beta0, const std::vector<double>& vartheta,
                 const std::vector<int>& area_of_row, double se2, double sv2) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double vt = sv2 > 0.0 ? vartheta[area_of_row[i]] : 0.0;
    double e = y[i] - fhat[i] - vt - beta0;
    acc += e * e / se2 + std::log(se2);
    if (sv2 > 0.0) acc += vt * vt / sv2 + std::log(sv2);
  }
  return acc;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_pop(const std::vector<double>& v) {
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace oracle
