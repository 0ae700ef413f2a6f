#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "saeboost/lmm.hpp"
#include "saeboost/megb.hpp"
#include "saeboost/rebb.hpp"

namespace sae::sim {

enum class NoiseKind { normal, pareto };

// Unit-level superpopulation: per area, covariate location parameters are
// drawn uniformly, then units get covariates, an area effect and unit noise.
struct ScenarioSpec {
  std::string name;
  double (*mean_fn)(double x1, double x2) = nullptr;
  double x1_sd = 0.0;
  double x2_sd = 0.0;
  double mu_lo = -1.0;
  double mu_hi = 1.0;
  double sigma_v = 0.0;  // area effect sd
  NoiseKind noise = NoiseKind::normal;
  double noise_sd = 0.0;    // normal noise
  double pareto_shape = 0.0;
  double pareto_scale = 0.0;
  int n_areas = 50;
  int units_per_area = 1000;
};

const std::vector<std::string>& scenario_names();
ScenarioSpec scenario_by_name(const std::string& name, int n_areas = 50,
                              int units_per_area = 1000);

// Inverse-cdf Pareto draw with support [scale, inf).
double sample_pareto(double shape, double scale, Rng& rng);

struct PopulationRealization {
  CensusFrame census;            // keeps y
  std::vector<double> true_means;  // per census area
};

PopulationRealization generate_population(const ScenarioSpec& spec, Rng& rng);

// Within-area sample sizes ramping over [6, 49] and summing to
// round(28.2 * n_areas); see README for the exact construction.
std::vector<int> default_allocation(int n_areas);

// Stratified SRSWOR with the given per-area sizes; pi = n_d / N_d.
SurveySample draw_stratified_sample(const PopulationRealization& pop,
                                    std::span<const int> allocation, Rng& rng);

// Horvitz-Thompson area means from inclusion probabilities (sampled areas only).
std::vector<double> ht_area_means(const SurveySample& sample);

// Monte-Carlo metrics; inputs indexed [run][area], outputs per area.
// rb and rrmse are fractions; the *_rmse comparisons are in percent.
std::vector<double> metric_rb(const std::vector<std::vector<double>>& estimates,
                              const std::vector<std::vector<double>>& truths);
std::vector<double> metric_rrmse(const std::vector<std::vector<double>>& estimates,
                                 const std::vector<std::vector<double>>& truths);
std::vector<double> empirical_rmse(const std::vector<std::vector<double>>& estimates,
                                   const std::vector<std::vector<double>>& truths);
std::vector<double> metric_rb_rmse(const std::vector<std::vector<double>>& mse_estimates,
                                   const std::vector<double>& rmse_empirical);
std::vector<double> metric_rrmse_rmse(const std::vector<std::vector<double>>& mse_estimates,
                                      const std::vector<double>& rmse_empirical);

enum class Estimator { ht, bhf, megb, megb_tuned };
Estimator parse_estimator(const std::string& name);
const char* estimator_name(Estimator e);

struct McConfig {
  ScenarioSpec scenario;
  std::vector<Estimator> estimators;
  int n_runs = 0;
  int bootstrap_b = 0;  // 0 = no mse estimation
  std::uint64_t seed = 0;
  Hyperparams params;
  megb::EmConfig em;
  std::vector<int> allocation;  // empty = default_allocation
};

struct McResult {
  std::vector<std::string> area_labels;          // census dense order
  std::vector<Estimator> estimators;
  std::vector<double> truths;                     // [run * D + area]
  std::vector<std::vector<double>> estimates;     // per estimator, same layout
  std::vector<double> mse_estimates;              // bootstrap mse, same layout
  int n_runs = 0;
  std::size_t n_areas = 0;

  double estimate_at(std::size_t e, int run, std::size_t area) const {
    return estimates[e][static_cast<std::size_t>(run) * n_areas + area];
  }
  // [run][area] tables for the metric functions
  std::vector<std::vector<double>> estimate_table(std::size_t e) const;
  std::vector<std::vector<double>> truth_table() const;
  std::vector<std::vector<double>> mse_table() const;
};

// Population regenerated every run; per-run work is independent given the
// derived seeds, so runs may execute concurrently.
McResult run_monte_carlo(const McConfig& cfg);
McResult run_monte_carlo_serial(const McConfig& cfg);

void write_results_csv(std::ostream& out, const McConfig& cfg, const McResult& res);
void write_metrics_csv(std::ostream& out, const McConfig& cfg, const McResult& res);

}  // namespace sae::sim
