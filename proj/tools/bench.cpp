// Times the OpenMP kernels against their serial reference paths and checks
// that both produce identical results.

#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <vector>

#include <omp.h>

#include "saeboost/boosting.hpp"
#include "saeboost/megb.hpp"
#include "saeboost/rebb.hpp"
#include "saeboost/simlab.hpp"
#include "saeboost/tree.hpp"

using namespace sae;

namespace {

struct Timed {
  double seconds;
  bool equal;
};

void report(const char* name, double serial_s, double parallel_s, bool equal) {
  std::printf("%-22s serial %8.3fs  parallel %8.3fs  speedup %5.2fx  %s\n", name,
              serial_s, parallel_s, parallel_s > 0 ? serial_s / parallel_s : 0.0,
              equal ? "identical" : "MISMATCH");
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

int bench_split(double scale) {
  std::size_t n = static_cast<std::size_t>(40000 * scale);
  int p = 12;
  Rng rng(1);
  FeatureMatrix x;
  x.rows = n;
  x.cols = static_cast<std::size_t>(p);
  x.values.resize(n * x.cols);
  for (double& v : x.values) v = rng.normal(0.0, 1.0);
  gbdt::GradHess gh;
  gh.g.resize(n);
  gh.h.assign(n, 1.0);
  for (double& v : gh.g) v = rng.normal(0.0, 1.0);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<int> feats(static_cast<std::size_t>(p));
  std::iota(feats.begin(), feats.end(), 0);
  Hyperparams hp;
  hp.min_child_weight = 1.0;
  hp.gamma = 0.0;

  gbdt::SplitCandidate cs, cp;
  double t0 = omp_get_wtime();
  for (int r = 0; r < 5; ++r)
    cs = gbdt::find_best_split(x, gh, rows, feats, hp, gbdt::SplitSearch::serial);
  double t1 = omp_get_wtime();
  for (int r = 0; r < 5; ++r)
    cp = gbdt::find_best_split(x, gh, rows, feats, hp, gbdt::SplitSearch::parallel);
  double t2 = omp_get_wtime();
  bool eq = cs.valid == cp.valid && cs.feature == cp.feature &&
            cs.threshold == cp.threshold && cs.gain == cp.gain;
  report("split search", t1 - t0, t2 - t1, eq);
  return eq ? 0 : 1;
}

int bench_bootstrap(double scale) {
  sim::ScenarioSpec spec = sim::scenario_by_name("Linear-Normal", 20, 60);
  Rng pop_rng(derive_seed(7, "population"));
  sim::PopulationRealization pop = sim::generate_population(spec, pop_rng);
  std::vector<int> alloc(20, 10);
  Rng smp_rng(derive_seed(7, "sample"));
  SurveySample sample = sim::draw_stratified_sample(pop, alloc, smp_rng);

  Hyperparams hp;
  hp.max_rounds = 80;
  megb::EmConfig em;
  em.iter_max = 3;
  megb::MegbModel model = megb::fit_megb(sample, hp, em, 7);

  int b = static_cast<int>(16 * scale);
  if (b < 2) b = 2;
  rebb::RebbOptions serial_opts;
  serial_opts.parallel = false;
  double t0 = omp_get_wtime();
  rebb::BootstrapResult rs =
      rebb::bootstrap_mse(model, sample, pop.census, b, 11, serial_opts);
  double t1 = omp_get_wtime();
  rebb::BootstrapResult rp = rebb::bootstrap_mse(model, sample, pop.census, b, 11);
  double t2 = omp_get_wtime();
  report("bootstrap mse", t1 - t0, t2 - t1, same_bits(rs.mse, rp.mse));
  return same_bits(rs.mse, rp.mse) ? 0 : 1;
}

int bench_monte_carlo(double scale) {
  sim::McConfig cfg;
  cfg.scenario = sim::scenario_by_name("Complex-Normal", 15, 50);
  cfg.estimators = {sim::Estimator::bhf, sim::Estimator::megb};
  cfg.n_runs = static_cast<int>(8 * scale);
  if (cfg.n_runs < 2) cfg.n_runs = 2;
  cfg.seed = 19;
  cfg.params.max_rounds = 60;
  cfg.em.iter_max = 2;
  cfg.allocation.assign(15, 8);

  double t0 = omp_get_wtime();
  sim::McResult rs = sim::run_monte_carlo_serial(cfg);
  double t1 = omp_get_wtime();
  sim::McResult rp = sim::run_monte_carlo(cfg);
  double t2 = omp_get_wtime();
  bool eq = same_bits(rs.truths, rp.truths);
  for (std::size_t e = 0; e < rs.estimates.size() && eq; ++e)
    eq = same_bits(rs.estimates[e], rp.estimates[e]);
  report("monte carlo", t1 - t0, t2 - t1, eq);
  return eq ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  double scale = argc > 1 ? std::atof(argv[1]) : 1.0;
  if (!(scale > 0)) {
    std::fprintf(stderr, "usage: %s [scale > 0]\n", argv[0]);
    return 2;
  }
  std::printf("threads: %d\n", omp_get_max_threads());
  int bad = 0;
  bad += bench_split(scale);
  bad += bench_bootstrap(scale);
  bad += bench_monte_carlo(scale);
  return bad;
}
