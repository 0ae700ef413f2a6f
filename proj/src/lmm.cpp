#include "saeboost/lmm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace sae::lmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMat>;

// Per-area sufficient statistics; the profiled likelihood only needs these,
// so each evaluation costs O(D p^2) regardless of n.
struct SuffStats {
  std::size_t n = 0, p = 0, d = 0;
  std::vector<double> nd;
  Eigen::MatrixXd sx;   // p x D, per-area sums of x
  Eigen::VectorXd sy;   // per-area sums of y
  Eigen::MatrixXd sxy;  // p x D
  Eigen::VectorXd syy;
  std::vector<Eigen::MatrixXd> sxx;  // per-area p x p
};

SuffStats accumulate(const std::vector<double>& y, const FeatureMatrix& x,
                     const std::vector<int>& area_of_row, std::size_t n_areas) {
  if (x.rows != y.size()) throw Error("lmm: response size does not match design rows");
  if (area_of_row.size() != x.rows) throw Error("lmm: area id size does not match rows");
  if (x.cols < 1) throw Error("lmm: empty fixed-effect design");
  if (n_areas < 2) throw Error("lmm: need at least 2 areas");

  SuffStats s;
  s.n = x.rows;
  s.p = x.cols;
  s.d = n_areas;
  s.nd.assign(n_areas, 0.0);
  s.sx = Eigen::MatrixXd::Zero(x.cols, n_areas);
  s.sy = Eigen::VectorXd::Zero(n_areas);
  s.sxy = Eigen::MatrixXd::Zero(x.cols, n_areas);
  s.syy = Eigen::VectorXd::Zero(n_areas);
  s.sxx.assign(n_areas, Eigen::MatrixXd::Zero(x.cols, x.cols));

  for (std::size_t i = 0; i < x.rows; ++i) {
    int d = area_of_row[i];
    if (d < 0 || static_cast<std::size_t>(d) >= n_areas)
      throw Error("lmm: unknown area id " + std::to_string(d));
    Eigen::Map<const Eigen::VectorXd> xi(x.row(i), static_cast<long>(x.cols));
    s.nd[d] += 1.0;
    s.sx.col(d) += xi;
    s.sy(d) += y[i];
    s.sxy.col(d) += xi * y[i];
    s.syy(d) += y[i] * y[i];
    s.sxx[d].noalias() += xi * xi.transpose();
  }
  for (std::size_t d = 0; d < n_areas; ++d)
    if (s.nd[d] == 0.0) throw Error("lmm: area " + std::to_string(d) + " has no rows");
  return s;
}

// Profiled Gaussian log-likelihood at fixed variances, beta solved by GLS.
// Returns -inf on invalid or numerically unusable points.
double pll_at(const SuffStats& s, double se2, double sv2, Eigen::VectorXd* beta_out) {
  if (!(se2 > 0.0) || !(sv2 >= 0.0) || !std::isfinite(se2) || !std::isfinite(sv2))
    return kNegInf;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s.p, s.p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(s.p);
  double logdet = 0.0;
  for (std::size_t d = 0; d < s.d; ++d) {
    double c = sv2 / (se2 + s.nd[d] * sv2);
    a.noalias() += s.sxx[d] - c * (s.sx.col(d) * s.sx.col(d).transpose());
    b.noalias() += s.sxy.col(d) - c * s.sx.col(d) * s.sy(d);
    logdet += (s.nd[d] - 1.0) * std::log(se2) + std::log(se2 + s.nd[d] * sv2);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) return kNegInf;
  Eigen::VectorXd beta = ldlt.solve(b);
  if (!beta.allFinite()) return kNegInf;

  double q = 0.0;
  for (std::size_t d = 0; d < s.d; ++d) {
    double c = sv2 / (se2 + s.nd[d] * sv2);
    double rss = s.syy(d) - 2.0 * beta.dot(s.sxy.col(d)) +
                 beta.dot(s.sxx[d] * beta);
    double rsum = s.sy(d) - s.sx.col(d).dot(beta);
    q += rss - c * rsum * rsum;
  }
  q /= se2;

  double ll = -0.5 * (static_cast<double>(s.n) * std::log(2.0 * std::numbers::pi) +
                      logdet + q);
  if (!std::isfinite(ll)) return kNegInf;
  if (beta_out) *beta_out = std::move(beta);
  return ll;
}

struct NmPoint {
  std::array<double, 2> x{};
  double f = 0.0;
};

// Standard Nelder-Mead on 2 parameters, minimizing.
template <typename F>
NmPoint nelder_mead2(F&& f, std::array<double, 2> start, double step, int max_iter) {
  std::array<NmPoint, 3> v;
  v[0].x = start;
  v[1].x = {start[0] + step, start[1]};
  v[2].x = {start[0], start[1] + step};
  for (auto& p : v) p.f = f(p.x);

  auto order = [&] {
    std::sort(v.begin(), v.end(),
              [](const NmPoint& a, const NmPoint& b) { return a.f < b.f; });
  };
  order();

  for (int it = 0; it < max_iter; ++it) {
    double fspread = std::abs(v[2].f - v[0].f);
    double xspread = std::max(std::abs(v[2].x[0] - v[0].x[0]) +
                                  std::abs(v[1].x[0] - v[0].x[0]),
                              std::abs(v[2].x[1] - v[0].x[1]) +
                                  std::abs(v[1].x[1] - v[0].x[1]));
    if (fspread < 1e-13 * (1.0 + std::abs(v[0].f)) && xspread < 1e-10) break;

    std::array<double, 2> c = {(v[0].x[0] + v[1].x[0]) / 2.0,
                               (v[0].x[1] + v[1].x[1]) / 2.0};
    auto at = [&](double t) {
      return std::array<double, 2>{c[0] + t * (c[0] - v[2].x[0]),
                                   c[1] + t * (c[1] - v[2].x[1])};
    };

    NmPoint refl{at(1.0), 0.0};
    refl.f = f(refl.x);
    if (refl.f < v[0].f) {
      NmPoint exp_{at(2.0), 0.0};
      exp_.f = f(exp_.x);
      v[2] = exp_.f < refl.f ? exp_ : refl;
    } else if (refl.f < v[1].f) {
      v[2] = refl;
    } else {
      NmPoint contr{at(refl.f < v[2].f ? 0.5 : -0.5), 0.0};
      contr.f = f(contr.x);
      if (contr.f < std::min(refl.f, v[2].f)) {
        v[2] = contr;
      } else {
        for (int i = 1; i < 3; ++i) {
          v[i].x = {(v[i].x[0] + v[0].x[0]) / 2.0, (v[i].x[1] + v[0].x[1]) / 2.0};
          v[i].f = f(v[i].x);
        }
      }
    }
    order();
  }
  return v[0];
}

}  // namespace

double profile_loglik(const std::vector<double>& y, const FeatureMatrix& x_fixed,
                      const std::vector<int>& area_of_row, std::size_t n_areas,
                      double sigma_eps2, double sigma_v2,
                      std::vector<double>* beta_out) {
  if (!(sigma_eps2 > 0.0)) throw Error("profile_loglik: sigma_eps2 must be positive");
  if (!(sigma_v2 >= 0.0)) throw Error("profile_loglik: sigma_v2 must be nonnegative");
  SuffStats s = accumulate(y, x_fixed, area_of_row, n_areas);
  Eigen::VectorXd beta;
  double ll = pll_at(s, sigma_eps2, sigma_v2, &beta);
  if (beta_out) beta_out->assign(beta.data(), beta.data() + beta.size());
  return ll;
}

LmmFit fit_ml(const std::vector<double>& y, const FeatureMatrix& x_fixed,
              const std::vector<int>& area_of_row, std::size_t n_areas) {
  SuffStats s = accumulate(y, x_fixed, area_of_row, n_areas);
  if (s.n <= s.p) throw Error("lmm: need more rows than fixed-effect columns");

  MapMat x(x_fixed.values.data(), static_cast<long>(x_fixed.rows),
           static_cast<long>(x_fixed.cols));
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<long>(y.size()));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < static_cast<long>(s.p))
    throw Error("lmm: fixed-effect design is rank deficient");
  Eigen::VectorXd beta_ols = qr.solve(yv);
  Eigen::VectorXd resid = yv - x * beta_ols;
  const double rss = resid.squaredNorm();
  const double n = static_cast<double>(s.n);
  const double dd = static_cast<double>(s.d);

  if (rss <= 0.0) {
    // exact interpolation; variances collapse, downstream treats as degenerate
    LmmFit fit;
    fit.beta.assign(beta_ols.data(), beta_ols.data() + beta_ols.size());
    fit.sigma_eps2 = 0.0;
    fit.sigma_v2 = 0.0;
    fit.vartheta.assign(n_areas, 0.0);
    fit.loglik = std::numeric_limits<double>::infinity();
    fit.boundary = true;
    return fit;
  }

  // ANOVA moment starts on OLS residuals
  std::vector<double> rbar(n_areas, 0.0);
  for (std::size_t i = 0; i < s.n; ++i) rbar[area_of_row[i]] += resid(i);
  double sum_nd2 = 0.0;
  for (std::size_t d = 0; d < n_areas; ++d) {
    rbar[d] /= s.nd[d];
    sum_nd2 += s.nd[d] * s.nd[d];
  }
  double ssw = 0.0, ssb = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    double e = resid(i) - rbar[area_of_row[i]];
    ssw += e * e;
  }
  double rmean = resid.sum() / n;
  for (std::size_t d = 0; d < n_areas; ++d)
    ssb += s.nd[d] * (rbar[d] - rmean) * (rbar[d] - rmean);

  double msw = s.n > s.d ? ssw / (n - dd) : rss / n;
  if (msw <= 0.0) msw = rss / n;
  double msb = ssb / (dd - 1.0);
  double ntilde = (n - sum_nd2 / n) / (dd - 1.0);
  double sv0 = std::max((msb - msw) / std::max(ntilde, 1e-12), msw * 1e-3);
  double se0 = msw;

  SuffStats* sp = &s;
  auto neg_ll = [sp](const std::array<double, 2>& u) {
    return -pll_at(*sp, std::exp(u[0]), std::exp(u[1]), nullptr);
  };

  std::array<std::array<double, 2>, 3> starts = {
      std::array<double, 2>{std::log(se0), std::log(sv0)},
      std::array<double, 2>{std::log(rss / n), std::log(rss / n)},
      std::array<double, 2>{std::log(se0), std::log(std::max(sv0, se0))},
  };
  NmPoint best{{0.0, 0.0}, std::numeric_limits<double>::infinity()};
  for (const auto& st : starts) {
    NmPoint r = nelder_mead2(neg_ll, st, 0.7, 400);
    if (r.f < best.f) best = r;
  }
  // polish from the winner with a tight simplex
  best = nelder_mead2(neg_ll, best.x, 0.05, 400);
  best = nelder_mead2(neg_ll, best.x, 1e-4, 400);

  double se2 = std::exp(best.x[0]);
  double sv2 = std::exp(best.x[1]);
  double loglik_interior = -best.f;

  // boundary model sigma_v2 = 0: OLS beta, variance rss/n
  double se2_b = rss / n;
  double loglik_b =
      -0.5 * n * (std::log(2.0 * std::numbers::pi) + std::log(se2_b) + 1.0);

  LmmFit fit;
  if (sv2 <= 1e-10 * se2 || loglik_b >= loglik_interior - 1e-9) {
    fit.beta.assign(beta_ols.data(), beta_ols.data() + beta_ols.size());
    fit.sigma_eps2 = se2_b;
    fit.sigma_v2 = 0.0;
    fit.vartheta.assign(n_areas, 0.0);
    fit.loglik = loglik_b;
    fit.boundary = true;
    return fit;
  }

  Eigen::VectorXd beta;
  fit.loglik = pll_at(s, se2, sv2, &beta);
  fit.beta.assign(beta.data(), beta.data() + beta.size());
  fit.sigma_eps2 = se2;
  fit.sigma_v2 = sv2;
  fit.boundary = false;
  fit.vartheta = blup(fit, y, x_fixed, area_of_row, n_areas);
  return fit;
}

std::vector<double> blup(const LmmFit& fit, const std::vector<double>& y,
                         const FeatureMatrix& x_fixed,
                         const std::vector<int>& area_of_row,
                         std::size_t n_areas) {
  if (x_fixed.rows != y.size() || area_of_row.size() != y.size())
    throw Error("blup: input sizes do not match");
  if (fit.beta.size() != x_fixed.cols)
    throw Error("blup: coefficient length does not match design");

  std::vector<double> sum_r(n_areas, 0.0), cnt(n_areas, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    int d = area_of_row[i];
    if (d < 0 || static_cast<std::size_t>(d) >= n_areas)
      throw Error("blup: unknown area id " + std::to_string(d));
    double xb = 0.0;
    const double* xi = x_fixed.row(i);
    for (std::size_t j = 0; j < x_fixed.cols; ++j) xb += xi[j] * fit.beta[j];
    sum_r[d] += y[i] - xb;
    cnt[d] += 1.0;
  }
  std::vector<double> vt(n_areas, 0.0);
  if (fit.sigma_v2 > 0.0) {
    for (std::size_t d = 0; d < n_areas; ++d) {
      if (cnt[d] == 0.0) continue;
      double shrink = cnt[d] * fit.sigma_v2 / (fit.sigma_eps2 + cnt[d] * fit.sigma_v2);
      vt[d] = shrink * (sum_r[d] / cnt[d]);
    }
  }
  return vt;
}

BhfResult bhf_area_means(const SurveySample& sample, const CensusFrame& census) {
  sample.validate();
  census.validate();
  check_feature_compat(sample, census);

  const std::size_t n = sample.n_rows();
  const std::size_t p = sample.n_features();
  FeatureMatrix xf;
  xf.rows = n;
  xf.cols = p + 1;
  xf.values.resize(n * (p + 1));
  for (std::size_t i = 0; i < n; ++i) {
    xf.at(i, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) xf.at(i, j + 1) = sample.x.at(i, j);
  }

  BhfResult res;
  res.fit = fit_ml(sample.y, xf, sample.area_of_row, sample.areas.n_areas());

  res.area_means.resize(census.areas.n_areas());
  res.in_sample.resize(census.areas.n_areas());
  for (std::size_t d = 0; d < census.areas.n_areas(); ++d) {
    const auto& rows = census.areas.rows[d];
    std::vector<double> xbar(p + 1, 0.0);
    xbar[0] = 1.0;
    for (std::size_t r : rows)
      for (std::size_t j = 0; j < p; ++j) xbar[j + 1] += census.x.at(r, j);
    for (std::size_t j = 0; j < p; ++j)
      xbar[j + 1] /= static_cast<double>(rows.size());

    double mu = 0.0;
    for (std::size_t j = 0; j <= p; ++j) mu += xbar[j] * res.fit.beta[j];
    int sd = sample.areas.find(census.areas.labels[d]);
    res.in_sample[d] = sd >= 0;
    if (sd >= 0) mu += res.fit.vartheta[sd];
    res.area_means[d] = mu;
  }
  return res;
}

}  // namespace sae::lmm
