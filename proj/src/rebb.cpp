#include "saeboost/rebb.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace sae::rebb {

namespace {

void check_same_areas(const MegbModel& model, const SurveySample& sample) {
  if (model.area_labels.size() != sample.areas.n_areas())
    throw Error("model was fitted on a different area set");
  for (std::size_t d = 0; d < model.area_labels.size(); ++d)
    if (model.area_labels[d] != sample.areas.labels[d])
      throw Error("model was fitted on a different area set (label mismatch at " +
                  std::to_string(d) + ")");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// variance with denominator n, around the mean
double pop_variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size());
}

}  // namespace

ResidualDecomposition decompose_residuals(const MegbModel& model,
                                          const SurveySample& sample) {
  sample.validate();
  check_same_areas(model, sample);
  if (!(model.sigma_eps2 > 0.0))
    throw Error("decompose_residuals: model has no positive unit-level variance");

  const std::size_t n_areas = sample.areas.n_areas();
  std::vector<double> fhat = model.ensemble.predict(sample.x);

  // marginal residuals: the random effect is deliberately not subtracted
  std::vector<double> level2(n_areas, 0.0);
  std::vector<std::vector<double>> level1(n_areas);
  for (std::size_t d = 0; d < n_areas; ++d) {
    const auto& rows = sample.areas.rows[d];
    std::vector<double>& r1 = level1[d];
    r1.reserve(rows.size());
    double sum = 0.0;
    for (std::size_t r : rows) {
      double e = sample.y[r] - fhat[r] - model.beta0;
      r1.push_back(e);
      sum += e;
    }
    double rbar = sum / static_cast<double>(rows.size());
    level2[d] = rbar;
    // subtract the area mean; the last element absorbs the rounding
    // remainder so the within-area sum is exactly zero
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < r1.size(); ++k) {
      r1[k] -= rbar;
      acc += r1[k];
    }
    r1.back() = -acc;
    if (r1.back() == 0.0) r1.back() = 0.0;  // normalize -0
  }

  ResidualDecomposition dec;

  // level 2: scale the area means to the fitted variance, then center
  double m2 = mean_of(level2);
  double s2 = std::sqrt(pop_variance(level2, m2));
  dec.level2_scaled.resize(n_areas);
  if (model.sigma_v2 > 0.0) {
    if (s2 == 0.0)
      throw Error("decompose_residuals: degenerate level-2 residuals (zero variance)");
    double f = std::sqrt(model.sigma_v2) / s2;
    for (std::size_t d = 0; d < n_areas; ++d) dec.level2_scaled[d] = level2[d] * f;
    double ms = mean_of(dec.level2_scaled);
    for (double& v : dec.level2_scaled) v -= ms;
  }
  // sigma_v2 == 0: no area-level noise; draws are identically zero

  // level 1: pooled scale factor, then center the pooled set
  double ss = 0.0, sum1 = 0.0;
  std::size_t n1 = 0;
  for (const auto& r1 : level1) {
    for (double v : r1) {
      sum1 += v;
      ++n1;
    }
  }
  double m1 = sum1 / static_cast<double>(n1);
  for (const auto& r1 : level1)
    for (double v : r1) ss += (v - m1) * (v - m1);
  double s1 = std::sqrt(ss / static_cast<double>(n1));
  if (s1 == 0.0)
    throw Error("decompose_residuals: degenerate level-1 residuals (zero variance)");

  double f1 = std::sqrt(model.sigma_eps2) / s1;
  dec.level1_scaled.resize(n_areas);
  double scaled_sum = 0.0;
  for (std::size_t d = 0; d < n_areas; ++d) {
    dec.level1_scaled[d].resize(level1[d].size());
    for (std::size_t k = 0; k < level1[d].size(); ++k) {
      dec.level1_scaled[d][k] = level1[d][k] * f1;
      scaled_sum += dec.level1_scaled[d][k];
    }
  }
  double mc = scaled_sum / static_cast<double>(n1);
  for (auto& r1 : dec.level1_scaled)
    for (double& v : r1) v -= mc;

  return dec;
}

namespace {

std::vector<double> pool_level1(const ResidualDecomposition& dec) {
  std::vector<double> pool;
  std::size_t total = 0;
  for (const auto& r1 : dec.level1_scaled) total += r1.size();
  pool.reserve(total);
  for (const auto& r1 : dec.level1_scaled) pool.insert(pool.end(), r1.begin(), r1.end());
  return pool;
}

}  // namespace

ErrorDraws sample_bootstrap_errors(const ResidualDecomposition& dec,
                                   const SurveySample& sample, Rng& rng,
                                   Level1Donors donors) {
  const std::size_t n_areas = dec.level2_scaled.size();
  if (n_areas == 0) throw Error("sample_bootstrap_errors: empty decomposition");
  if (sample.areas.n_areas() != n_areas)
    throw Error("sample_bootstrap_errors: decomposition does not match sample areas");

  std::vector<double> pool;
  if (donors == Level1Donors::pooled) pool = pool_level1(dec);

  ErrorDraws draws;
  draws.level2.resize(n_areas);
  for (std::size_t d = 0; d < n_areas; ++d)
    draws.level2[d] = dec.level2_scaled[rng.uniform_index(n_areas)];
  draws.level1.resize(n_areas);
  for (std::size_t d = 0; d < n_areas; ++d) {
    const std::vector<double>& src =
        donors == Level1Donors::pooled ? pool : dec.level1_scaled[d];
    draws.level1[d].resize(sample.n_d(static_cast<int>(d)));
    for (double& v : draws.level1[d]) v = src[rng.uniform_index(src.size())];
  }
  return draws;
}

namespace {

struct RebbContext {
  const MegbModel& model;
  const SurveySample& sample;
  const CensusFrame& census;
  std::uint64_t seed;
  Level1Donors donors;
  ResidualDecomposition dec;
  std::vector<double> pool;            // pooled level-1 donors
  std::vector<double> mean_structure;  // fhat + beta0 over census rows
  std::vector<int> sample_area_of;     // census area -> sampled dense id or -1
  std::vector<std::size_t> sample_nd;  // original n_d per census area (0 = OOS)
};

RebbContext build_context(const MegbModel& model, const SurveySample& sample,
                          const CensusFrame& census, std::uint64_t seed,
                          Level1Donors donors) {
  sample.validate();
  census.validate();
  check_feature_compat(sample, census);
  check_same_areas(model, sample);

  RebbContext ctx{model, sample, census, seed, donors, {}, {}, {}, {}, {}};
  ctx.dec = decompose_residuals(model, sample);
  ctx.pool = pool_level1(ctx.dec);

  std::vector<double> fhat = model.ensemble.predict(census.x);
  ctx.mean_structure.resize(census.n_rows());
  for (std::size_t r = 0; r < census.n_rows(); ++r)
    ctx.mean_structure[r] = fhat[r] + model.beta0;

  const std::size_t cd = census.areas.n_areas();
  ctx.sample_area_of.assign(cd, -1);
  ctx.sample_nd.assign(cd, 0);
  std::size_t matched = 0;
  for (std::size_t d = 0; d < cd; ++d) {
    int sd = sample.areas.find(census.areas.labels[d]);
    ctx.sample_area_of[d] = sd;
    if (sd >= 0) {
      std::size_t nd = sample.n_d(sd);
      if (census.n_d(static_cast<int>(d)) < nd)
        throw Error("bootstrap: census area '" + census.areas.labels[d] +
                    "' is smaller than its sample");
      ctx.sample_nd[d] = nd;
      ++matched;
    }
  }
  if (matched != sample.areas.n_areas())
    throw Error("bootstrap: census does not cover every sampled area");
  return ctx;
}

// One bootstrap replicate: synthetic census, redrawn sample, refit, score.
void run_replicate(const RebbContext& ctx, int b, std::vector<double>& mu_true,
                   std::vector<double>& mu_hat) {
  Rng rng(derive_seed(ctx.seed, "rebb", static_cast<std::uint64_t>(b)));
  const CensusFrame& census = ctx.census;
  const std::size_t cd = census.areas.n_areas();
  const std::size_t ds = ctx.dec.level2_scaled.size();

  std::vector<double> yb(census.n_rows());
  mu_true.resize(cd);
  // census areas in dense order: one level-2 draw, then N_d level-1 draws
  for (std::size_t d = 0; d < cd; ++d) {
    double v2 = ctx.dec.level2_scaled[rng.uniform_index(ds)];
    const std::vector<double>* donors = &ctx.pool;
    if (ctx.donors == Level1Donors::per_area && ctx.sample_area_of[d] >= 0)
      donors = &ctx.dec.level1_scaled[ctx.sample_area_of[d]];
    double sum = 0.0;
    for (std::size_t r : census.areas.rows[d]) {
      yb[r] = ctx.mean_structure[r] + v2 + (*donors)[rng.uniform_index(donors->size())];
      sum += yb[r];
    }
    mu_true[d] = sum / static_cast<double>(census.areas.rows[d].size());
  }

  // redraw the sample: SRSWOR with the original n_d inside sampled areas
  SurveySample bs;
  bs.x.cols = census.n_features();
  for (std::size_t d = 0; d < cd; ++d) {
    if (ctx.sample_nd[d] == 0) continue;
    const auto& rows = census.areas.rows[d];
    std::vector<std::size_t> pick =
        rng.sample_without_replacement(rows.size(), ctx.sample_nd[d]);
    std::sort(pick.begin(), pick.end());
    int id = bs.areas.add(census.areas.labels[d]);
    for (std::size_t k : pick) {
      std::size_t r = rows[k];
      bs.areas.rows[id].push_back(bs.x.rows);
      bs.area_of_row.push_back(id);
      const double* xr = census.x.row(r);
      bs.x.values.insert(bs.x.values.end(), xr, xr + census.n_features());
      bs.y.push_back(yb[r]);
      ++bs.x.rows;
    }
  }

  MegbModel refit = megb::fit_megb(bs, ctx.model.params, ctx.model.em,
                                   derive_seed(ctx.seed, "rebb-fit",
                                               static_cast<std::uint64_t>(b)));
  mu_hat = megb::area_means(refit, census);
}

BootstrapResult aggregate(const RebbContext& ctx, int b,
                          std::vector<std::vector<double>>& mu_true_by_rep,
                          std::vector<std::vector<double>>& mu_hat_by_rep) {
  const std::size_t cd = ctx.census.areas.n_areas();
  BootstrapResult res;
  res.b = b;
  res.area_labels = ctx.census.areas.labels;
  res.mu_true.assign(cd, std::vector<double>(static_cast<std::size_t>(b)));
  res.mu_hat.assign(cd, std::vector<double>(static_cast<std::size_t>(b)));
  res.mse.assign(cd, 0.0);
  for (int rep = 0; rep < b; ++rep) {
    for (std::size_t d = 0; d < cd; ++d) {
      double t = mu_true_by_rep[rep][d];
      double h = mu_hat_by_rep[rep][d];
      res.mu_true[d][rep] = t;
      res.mu_hat[d][rep] = h;
      res.mse[d] += (t - h) * (t - h);
    }
  }
  for (std::size_t d = 0; d < cd; ++d) res.mse[d] /= static_cast<double>(b);
  return res;
}

}  // namespace

BootstrapResult bootstrap_mse(const MegbModel& model, const SurveySample& sample,
                              const CensusFrame& census, int b, std::uint64_t seed,
                              const RebbOptions& opts) {
  if (b < 1) throw Error("bootstrap_mse: need at least one replicate");
  if (!opts.parallel) return bootstrap_mse_serial(model, sample, census, b, seed, opts);

  RebbContext ctx = build_context(model, sample, census, seed, opts.donors);
  std::vector<std::vector<double>> mu_true(static_cast<std::size_t>(b));
  std::vector<std::vector<double>> mu_hat(static_cast<std::size_t>(b));
  std::vector<std::string> errors(static_cast<std::size_t>(b));
  std::vector<char> failed(static_cast<std::size_t>(b), 0);

#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < b; ++rep) {
    try {
      run_replicate(ctx, rep, mu_true[rep], mu_hat[rep]);
      if (opts.on_replicate) {
#pragma omp critical
        opts.on_replicate(rep);
      }
    } catch (const std::exception& e) {
      failed[rep] = 1;
      errors[rep] = e.what();
    }
  }
  for (int rep = 0; rep < b; ++rep)
    if (failed[rep])
      throw Error("bootstrap replicate " + std::to_string(rep) +
                  " failed: " + errors[rep]);
  return aggregate(ctx, b, mu_true, mu_hat);
}

BootstrapResult bootstrap_mse_serial(const MegbModel& model,
                                     const SurveySample& sample,
                                     const CensusFrame& census, int b,
                                     std::uint64_t seed, const RebbOptions& opts) {
  if (b < 1) throw Error("bootstrap_mse: need at least one replicate");
  RebbContext ctx = build_context(model, sample, census, seed, opts.donors);
  std::vector<std::vector<double>> mu_true(static_cast<std::size_t>(b));
  std::vector<std::vector<double>> mu_hat(static_cast<std::size_t>(b));
  for (int rep = 0; rep < b; ++rep) {
    try {
      run_replicate(ctx, rep, mu_true[rep], mu_hat[rep]);
    } catch (const std::exception& e) {
      throw Error("bootstrap replicate " + std::to_string(rep) +
                  " failed: " + e.what());
    }
    if (opts.on_replicate) opts.on_replicate(rep);
  }
  return aggregate(ctx, b, mu_true, mu_hat);
}

}  // namespace sae::rebb
