#include "saeboost/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "saeboost/csv.hpp"
#include "saeboost/textio.hpp"

namespace sae::sim {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double mean_linear(double x1, double x2) { return 5000.0 - 500.0 * x1 - 500.0 * x2; }
double mean_complex_normal(double x1, double x2) {
  return 15000.0 - 500.0 * x1 * x2 - 250.0 * x2 * x2;
}
double mean_complex_pareto(double x1, double x2) {
  return 20000.0 - 500.0 * x1 * x2 - 250.0 * x2 * x2;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "Linear-Normal", "Complex-Normal", "Linear-Pareto", "Complex-Pareto"};
  return names;
}

ScenarioSpec scenario_by_name(const std::string& name, int n_areas,
                              int units_per_area) {
  ScenarioSpec s;
  s.name = name;
  s.n_areas = n_areas;
  s.units_per_area = units_per_area;
  if (name == "Linear-Normal") {
    s.mean_fn = mean_linear;
    s.x1_sd = 3.0;
    s.x2_sd = 3.0;
    s.sigma_v = 500.0;
    s.noise = NoiseKind::normal;
    s.noise_sd = 1000.0;
  } else if (name == "Complex-Normal") {
    s.mean_fn = mean_complex_normal;
    s.x1_sd = 4.0;
    s.x2_sd = 2.0;
    s.sigma_v = 500.0;
    s.noise = NoiseKind::normal;
    s.noise_sd = 1000.0;
  } else if (name == "Linear-Pareto") {
    s.mean_fn = mean_linear;
    s.x1_sd = 3.0;
    s.x2_sd = 3.0;
    s.sigma_v = 500.0;
    s.noise = NoiseKind::pareto;
    s.pareto_shape = 3.0;
    s.pareto_scale = 800.0;
  } else if (name == "Complex-Pareto") {
    s.mean_fn = mean_complex_pareto;
    s.x1_sd = 2.0;
    s.x2_sd = 2.0;
    s.sigma_v = 1000.0;
    s.noise = NoiseKind::pareto;
    s.pareto_shape = 3.0;
    s.pareto_scale = 800.0;
  } else {
    std::string all;
    for (const auto& n : scenario_names()) {
      if (!all.empty()) all += ", ";
      all += n;
    }
    throw Error("unknown scenario '" + name + "'; supported: " + all);
  }
  if (n_areas < 1) throw Error("scenario: need at least one area");
  if (units_per_area < 1) throw Error("scenario: need at least one unit per area");
  return s;
}

double sample_pareto(double shape, double scale, Rng& rng) {
  if (!(shape > 1.0)) throw Error("pareto: shape must be > 1");
  if (!(scale > 0.0)) throw Error("pareto: scale must be positive");
  return scale * std::pow(rng.uniform_pos(), -1.0 / shape);
}

PopulationRealization generate_population(const ScenarioSpec& spec, Rng& rng) {
  if (!spec.mean_fn) throw Error("scenario: mean function not set");

  PopulationRealization pop;
  CensusFrame& c = pop.census;
  const std::size_t n =
      static_cast<std::size_t>(spec.n_areas) * static_cast<std::size_t>(spec.units_per_area);
  c.x.rows = n;
  c.x.cols = 2;
  c.x.values.resize(n * 2);
  c.y.resize(n);
  c.area_of_row.resize(n);

  std::size_t row = 0;
  for (int d = 0; d < spec.n_areas; ++d) {
    int id = c.areas.add(std::to_string(d + 1));
    double mu1 = rng.uniform(spec.mu_lo, spec.mu_hi);
    double mu2 = rng.uniform(spec.mu_lo, spec.mu_hi);
    double vt = rng.normal(0.0, spec.sigma_v);
    double sum = 0.0;
    for (int i = 0; i < spec.units_per_area; ++i, ++row) {
      double x1 = rng.normal(mu1, spec.x1_sd);
      double x2 = rng.normal(mu2, spec.x2_sd);
      double eps = spec.noise == NoiseKind::normal
                       ? rng.normal(0.0, spec.noise_sd)
                       : sample_pareto(spec.pareto_shape, spec.pareto_scale, rng);
      c.x.at(row, 0) = x1;
      c.x.at(row, 1) = x2;
      double y = spec.mean_fn(x1, x2) + vt + eps;
      c.y[row] = y;
      c.area_of_row[row] = id;
      c.areas.rows[id].push_back(row);
      sum += y;
    }
    pop.true_means.push_back(sum / static_cast<double>(spec.units_per_area));
  }
  return pop;
}

std::vector<int> default_allocation(int n_areas) {
  if (n_areas < 1) throw Error("allocation: need at least one area");
  const int lo = 6, hi = 49;
  long target = std::lround(28.2 * n_areas);
  std::vector<int> alloc(n_areas);
  if (n_areas == 1) {
    alloc[0] = static_cast<int>(std::clamp<long>(target, lo, hi));
    return alloc;
  }
  long sum = 0;
  for (int d = 0; d < n_areas; ++d) {
    alloc[d] = static_cast<int>(
        std::lround(lo + (hi - lo) * static_cast<double>(d) / (n_areas - 1)));
    sum += alloc[d];
  }
  // nudge interior areas (ends stay at 6 and 49) until the total matches
  long diff = target - sum;
  while (diff != 0) {
    bool moved = false;
    for (int d = 1; d + 1 < n_areas && diff != 0; ++d) {
      if (diff > 0 && alloc[d] < hi) {
        ++alloc[d];
        --diff;
        moved = true;
      } else if (diff < 0 && alloc[d] > lo) {
        --alloc[d];
        ++diff;
        moved = true;
      }
    }
    if (!moved) break;  // bounds saturated; keep the closest achievable total
  }
  return alloc;
}

SurveySample draw_stratified_sample(const PopulationRealization& pop,
                                    std::span<const int> allocation, Rng& rng) {
  const CensusFrame& c = pop.census;
  if (c.y.empty()) throw Error("sampling: population has no responses");
  if (allocation.size() != c.areas.n_areas())
    throw Error("sampling: allocation covers " + std::to_string(allocation.size()) +
                " areas but the population has " + std::to_string(c.areas.n_areas()));

  SurveySample s;
  s.x.cols = c.x.cols;
  for (std::size_t d = 0; d < c.areas.n_areas(); ++d) {
    int nd = allocation[d];
    if (nd == 0) continue;  // area left out of sample
    const auto& rows = c.areas.rows[d];
    if (nd < 0 || static_cast<std::size_t>(nd) > rows.size())
      throw Error("sampling: allocation " + std::to_string(nd) + " exceeds area '" +
                  c.areas.labels[d] + "' population " + std::to_string(rows.size()));
    std::vector<std::size_t> pick =
        rng.sample_without_replacement(rows.size(), static_cast<std::size_t>(nd));
    std::sort(pick.begin(), pick.end());
    int id = s.areas.add(c.areas.labels[d]);
    double prob = static_cast<double>(nd) / static_cast<double>(rows.size());
    for (std::size_t k : pick) {
      std::size_t r = rows[k];
      s.areas.rows[id].push_back(s.x.rows);
      s.area_of_row.push_back(id);
      const double* xr = c.x.row(r);
      s.x.values.insert(s.x.values.end(), xr, xr + c.x.cols);
      s.y.push_back(c.y[r]);
      s.pi.push_back(prob);
      ++s.x.rows;
    }
  }
  s.validate();
  return s;
}

std::vector<double> ht_area_means(const SurveySample& sample) {
  sample.validate();
  if (sample.pi.empty())
    throw Error("ht: sample has no inclusion probabilities");
  std::vector<double> out(sample.areas.n_areas());
  for (std::size_t d = 0; d < sample.areas.n_areas(); ++d) {
    const auto& rows = sample.areas.rows[d];
    double s = 0.0;
    for (std::size_t r : rows) s += sample.y[r] / sample.pi[r];
    out[d] = s / static_cast<double>(rows.size());
  }
  return out;
}

namespace {

void check_rectangular(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  if (a.empty() || a.size() != b.size())
    throw Error("metrics: run dimension mismatch");
  for (std::size_t j = 0; j < a.size(); ++j)
    if (a[j].size() != a[0].size() || b[j].size() != a[0].size())
      throw Error("metrics: inputs are not rectangular");
  if (a[0].empty()) throw Error("metrics: no areas");
}

}  // namespace

std::vector<double> metric_rb(const std::vector<std::vector<double>>& estimates,
                              const std::vector<std::vector<double>>& truths) {
  check_rectangular(estimates, truths);
  const std::size_t runs = estimates.size(), d_count = estimates[0].size();
  std::vector<double> rb(d_count, 0.0);
  for (std::size_t d = 0; d < d_count; ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < runs; ++j) {
      if (truths[j][d] == 0.0) throw Error("metrics: zero truth");
      acc += (estimates[j][d] - truths[j][d]) / truths[j][d];
    }
    rb[d] = acc / static_cast<double>(runs);
  }
  return rb;
}

std::vector<double> empirical_rmse(const std::vector<std::vector<double>>& estimates,
                                   const std::vector<std::vector<double>>& truths) {
  check_rectangular(estimates, truths);
  const std::size_t runs = estimates.size(), d_count = estimates[0].size();
  std::vector<double> out(d_count, 0.0);
  for (std::size_t d = 0; d < d_count; ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < runs; ++j) {
      double e = estimates[j][d] - truths[j][d];
      acc += e * e;
    }
    out[d] = std::sqrt(acc / static_cast<double>(runs));
  }
  return out;
}

std::vector<double> metric_rrmse(const std::vector<std::vector<double>>& estimates,
                                 const std::vector<std::vector<double>>& truths) {
  check_rectangular(estimates, truths);
  const std::size_t runs = estimates.size(), d_count = estimates[0].size();
  std::vector<double> rmse = empirical_rmse(estimates, truths);
  std::vector<double> out(d_count, 0.0);
  for (std::size_t d = 0; d < d_count; ++d) {
    double tbar = 0.0;
    for (std::size_t j = 0; j < runs; ++j) tbar += truths[j][d];
    tbar /= static_cast<double>(runs);
    if (tbar == 0.0) throw Error("metrics: zero mean truth");
    out[d] = rmse[d] / tbar;
  }
  return out;
}

std::vector<double> metric_rb_rmse(const std::vector<std::vector<double>>& mse_estimates,
                                   const std::vector<double>& rmse_empirical) {
  if (mse_estimates.empty()) throw Error("metrics: no runs");
  const std::size_t runs = mse_estimates.size(), d_count = rmse_empirical.size();
  std::vector<double> out(d_count, 0.0);
  for (std::size_t d = 0; d < d_count; ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < runs; ++j) {
      if (mse_estimates[j].size() != d_count)
        throw Error("metrics: inputs are not rectangular");
      if (mse_estimates[j][d] < 0.0) throw Error("metrics: negative mse estimate");
      acc += mse_estimates[j][d];
    }
    if (!(rmse_empirical[d] > 0.0)) throw Error("metrics: empirical rmse must be positive");
    out[d] = (std::sqrt(acc / static_cast<double>(runs)) - rmse_empirical[d]) /
             rmse_empirical[d] * 100.0;
  }
  return out;
}

std::vector<double> metric_rrmse_rmse(
    const std::vector<std::vector<double>>& mse_estimates,
    const std::vector<double>& rmse_empirical) {
  if (mse_estimates.empty()) throw Error("metrics: no runs");
  const std::size_t runs = mse_estimates.size(), d_count = rmse_empirical.size();
  std::vector<double> out(d_count, 0.0);
  for (std::size_t d = 0; d < d_count; ++d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < runs; ++j) {
      if (mse_estimates[j].size() != d_count)
        throw Error("metrics: inputs are not rectangular");
      if (mse_estimates[j][d] < 0.0) throw Error("metrics: negative mse estimate");
      double e = std::sqrt(mse_estimates[j][d]) - rmse_empirical[d];
      acc += e * e;
    }
    if (!(rmse_empirical[d] > 0.0)) throw Error("metrics: empirical rmse must be positive");
    out[d] = std::sqrt(acc / static_cast<double>(runs)) / rmse_empirical[d] * 100.0;
  }
  return out;
}

Estimator parse_estimator(const std::string& name) {
  if (name == "HT") return Estimator::ht;
  if (name == "BHF") return Estimator::bhf;
  if (name == "MEGB") return Estimator::megb;
  if (name == "MEGB-tuned") return Estimator::megb_tuned;
  throw Error("unknown estimator '" + name +
              "'; supported: HT, BHF, MEGB, MEGB-tuned");
}

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::ht: return "HT";
    case Estimator::bhf: return "BHF";
    case Estimator::megb: return "MEGB";
    case Estimator::megb_tuned: return "MEGB-tuned";
  }
  return "?";
}

std::vector<std::vector<double>> McResult::estimate_table(std::size_t e) const {
  std::vector<std::vector<double>> t(static_cast<std::size_t>(n_runs));
  for (int j = 0; j < n_runs; ++j)
    t[j].assign(estimates[e].begin() + static_cast<long>(j * n_areas),
                estimates[e].begin() + static_cast<long>((j + 1) * n_areas));
  return t;
}

std::vector<std::vector<double>> McResult::truth_table() const {
  std::vector<std::vector<double>> t(static_cast<std::size_t>(n_runs));
  for (int j = 0; j < n_runs; ++j)
    t[j].assign(truths.begin() + static_cast<long>(j * n_areas),
                truths.begin() + static_cast<long>((j + 1) * n_areas));
  return t;
}

std::vector<std::vector<double>> McResult::mse_table() const {
  std::vector<std::vector<double>> t(static_cast<std::size_t>(n_runs));
  for (int j = 0; j < n_runs; ++j)
    t[j].assign(mse_estimates.begin() + static_cast<long>(j * n_areas),
                mse_estimates.begin() + static_cast<long>((j + 1) * n_areas));
  return t;
}

namespace {

struct McContext {
  const McConfig& cfg;
  std::vector<int> allocation;
  bool with_mse = false;
  std::size_t megb_index = 0;  // position of MEGB in cfg.estimators
};

McContext prepare(const McConfig& cfg) {
  if (cfg.n_runs < 1) throw Error("simulate: need at least one run");
  if (cfg.estimators.empty()) throw Error("simulate: no estimators requested");
  if (!cfg.scenario.mean_fn) throw Error("simulate: scenario mean function not set");
  cfg.params.validate();
  cfg.em.validate();

  McContext ctx{cfg, {}, cfg.bootstrap_b > 0, 0};
  if (ctx.with_mse) {
    auto it = std::find(cfg.estimators.begin(), cfg.estimators.end(), Estimator::megb);
    if (it == cfg.estimators.end())
      throw Error("simulate: bootstrap mse requires the MEGB estimator");
    ctx.megb_index = static_cast<std::size_t>(it - cfg.estimators.begin());
  }

  if (cfg.allocation.empty()) {
    ctx.allocation = default_allocation(cfg.scenario.n_areas);
    for (int& nd : ctx.allocation) nd = std::min(nd, cfg.scenario.units_per_area);
  } else {
    if (cfg.allocation.size() != static_cast<std::size_t>(cfg.scenario.n_areas))
      throw Error("simulate: allocation length does not match the area count");
    ctx.allocation = cfg.allocation;
  }
  return ctx;
}

void run_one(const McContext& ctx, int j, McResult& res) {
  const McConfig& cfg = ctx.cfg;
  const std::size_t d_count = res.n_areas;
  std::uint64_t run_seed = derive_seed(cfg.seed, "mc-run", static_cast<std::uint64_t>(j));

  Rng pop_rng(derive_seed(run_seed, "population"));
  PopulationRealization pop = generate_population(cfg.scenario, pop_rng);
  Rng smp_rng(derive_seed(run_seed, "sample"));
  SurveySample sample = draw_stratified_sample(pop, ctx.allocation, smp_rng);

  const std::size_t base = static_cast<std::size_t>(j) * d_count;
  for (std::size_t d = 0; d < d_count; ++d) res.truths[base + d] = pop.true_means[d];

  megb::MegbModel megb_model;
  bool have_megb = false;

  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    std::vector<double> est(d_count, kNan);
    switch (cfg.estimators[e]) {
      case Estimator::ht: {
        std::vector<double> ht = ht_area_means(sample);
        for (std::size_t d = 0; d < d_count; ++d) {
          int sd = sample.areas.find(pop.census.areas.labels[d]);
          if (sd >= 0) est[d] = ht[sd];
        }
        break;
      }
      case Estimator::bhf: {
        est = lmm::bhf_area_means(sample, pop.census).area_means;
        break;
      }
      case Estimator::megb: {
        megb_model = megb::fit_megb(sample, cfg.params, cfg.em,
                                    derive_seed(run_seed, "megb"));
        have_megb = true;
        est = megb::area_means(megb_model, pop.census);
        break;
      }
      case Estimator::megb_tuned: {
        megb::TuneGrid grid = megb::default_tune_grid();
        std::vector<megb::TunableParam> order = megb::default_tune_order();
        Hyperparams tuned = megb::tune_sequential(sample, grid, order, cfg.params,
                                                  derive_seed(run_seed, "tune"));
        megb::MegbModel m = megb::fit_megb(sample, tuned, cfg.em,
                                           derive_seed(run_seed, "megb-tuned"));
        est = megb::area_means(m, pop.census);
        break;
      }
    }
    for (std::size_t d = 0; d < d_count; ++d)
      res.estimates[e][base + d] = est[d];
  }

  if (ctx.with_mse) {
    if (!have_megb) throw Error("simulate: internal: megb model missing");
    rebb::BootstrapResult bres =
        rebb::bootstrap_mse(megb_model, sample, pop.census, cfg.bootstrap_b,
                            derive_seed(run_seed, "rebb"));
    for (std::size_t d = 0; d < d_count; ++d)
      res.mse_estimates[base + d] = bres.mse[d];
  }
}

McResult init_result(const McContext& ctx) {
  McResult res;
  res.n_runs = ctx.cfg.n_runs;
  res.n_areas = static_cast<std::size_t>(ctx.cfg.scenario.n_areas);
  res.estimators = ctx.cfg.estimators;
  for (int d = 0; d < ctx.cfg.scenario.n_areas; ++d)
    res.area_labels.push_back(std::to_string(d + 1));
  std::size_t cells = static_cast<std::size_t>(res.n_runs) * res.n_areas;
  res.truths.assign(cells, kNan);
  res.estimates.assign(ctx.cfg.estimators.size(), std::vector<double>(cells, kNan));
  if (ctx.with_mse) res.mse_estimates.assign(cells, kNan);
  return res;
}

}  // namespace

McResult run_monte_carlo(const McConfig& cfg) {
  McContext ctx = prepare(cfg);
  McResult res = init_result(ctx);

  std::vector<std::string> errors(static_cast<std::size_t>(cfg.n_runs));
  std::vector<char> failed(static_cast<std::size_t>(cfg.n_runs), 0);
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < cfg.n_runs; ++j) {
    try {
      run_one(ctx, j, res);
    } catch (const std::exception& e) {
      failed[static_cast<std::size_t>(j)] = 1;
      errors[static_cast<std::size_t>(j)] = e.what();
    }
  }
  for (int j = 0; j < cfg.n_runs; ++j)
    if (failed[static_cast<std::size_t>(j)])
      throw Error("simulation run " + std::to_string(j) +
                  " failed: " + errors[static_cast<std::size_t>(j)]);
  return res;
}

McResult run_monte_carlo_serial(const McConfig& cfg) {
  McContext ctx = prepare(cfg);
  McResult res = init_result(ctx);
  for (int j = 0; j < cfg.n_runs; ++j) {
    try {
      run_one(ctx, j, res);
    } catch (const std::exception& e) {
      throw Error("simulation run " + std::to_string(j) + " failed: " + e.what());
    }
  }
  return res;
}

namespace {

std::string field_or_empty(double v) {
  return std::isnan(v) ? std::string() : format_double(v);
}

double mean_finite(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t k = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      s += x;
      ++k;
    }
  return k ? s / static_cast<double>(k) : kNan;
}

double median_finite(std::vector<double> v) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  if (v.empty()) return kNan;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

void write_results_csv(std::ostream& out, const McConfig& cfg, const McResult& res) {
  write_csv_row(out, {"scenario", "estimator", "run", "area", "estimate", "truth",
                      "mse_est"});
  for (std::size_t e = 0; e < res.estimators.size(); ++e) {
    bool mse_rows = !res.mse_estimates.empty() && res.estimators[e] == Estimator::megb;
    for (int j = 0; j < res.n_runs; ++j) {
      for (std::size_t d = 0; d < res.n_areas; ++d) {
        std::size_t cell = static_cast<std::size_t>(j) * res.n_areas + d;
        write_csv_row(out, {cfg.scenario.name, estimator_name(res.estimators[e]),
                            std::to_string(j + 1), res.area_labels[d],
                            field_or_empty(res.estimates[e][cell]),
                            field_or_empty(res.truths[cell]),
                            mse_rows ? field_or_empty(res.mse_estimates[cell])
                                     : std::string()});
      }
    }
  }
}

void write_metrics_csv(std::ostream& out, const McConfig& cfg, const McResult& res) {
  write_csv_row(out, {"scenario", "estimator", "metric", "mean", "median"});
  auto truth_tab = res.truth_table();
  for (std::size_t e = 0; e < res.estimators.size(); ++e) {
    auto est_tab = res.estimate_table(e);
    std::vector<double> rb = metric_rb(est_tab, truth_tab);
    std::vector<double> rrmse = metric_rrmse(est_tab, truth_tab);
    for (double& v : rb) v *= 100.0;
    for (double& v : rrmse) v *= 100.0;

    auto emit = [&](const char* metric, const std::vector<double>& v) {
      write_csv_row(out, {cfg.scenario.name, estimator_name(res.estimators[e]), metric,
                          format_double(mean_finite(v)),
                          format_double(median_finite(v))});
    };
    emit("RB", rb);
    emit("RRMSE", rrmse);

    if (!res.mse_estimates.empty() && res.estimators[e] == Estimator::megb) {
      std::vector<double> emp = empirical_rmse(est_tab, truth_tab);
      auto mse_tab = res.mse_table();
      emit("RB-RMSE", metric_rb_rmse(mse_tab, emp));
      emit("RRMSE-RMSE", metric_rrmse_rmse(mse_tab, emp));
    }
  }
}

}  // namespace sae::sim
