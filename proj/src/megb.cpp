#include "saeboost/megb.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "saeboost/lmm.hpp"
#include "saeboost/textio.hpp"

namespace sae::megb {

void EmConfig::validate() const {
  if (std::isnan(tol) || tol <= 0.0) throw Error("em: tol must be positive");
  if (iter_max < 1) throw Error("em: iter_max must be >= 1");
}

int MegbModel::sampled_area_id(const std::string& label) const {
  for (std::size_t d = 0; d < area_labels.size(); ++d)
    if (area_labels[d] == label) return static_cast<int>(d);
  return -1;
}

namespace {

void check_same_areas(const MegbModel& model, const SurveySample& sample) {
  if (model.area_labels.size() != sample.areas.n_areas())
    throw Error("model was fitted on a different area set");
  for (std::size_t d = 0; d < model.area_labels.size(); ++d)
    if (model.area_labels[d] != sample.areas.labels[d])
      throw Error("model was fitted on a different area set (label mismatch at " +
                  std::to_string(d) + ")");
}

}  // namespace

MegbModel fit_megb(const SurveySample& sample, const Hyperparams& params,
                   const EmConfig& em, std::uint64_t seed, gbdt::SplitSearch mode) {
  sample.validate();
  params.validate();
  em.validate();
  if (sample.areas.n_areas() < 2) throw Error("fit_megb: need at least 2 areas");

  const std::size_t n = sample.n_rows();
  const std::size_t n_areas = sample.areas.n_areas();

  MegbModel m;
  m.params = params;
  m.em = em;
  m.area_labels = sample.areas.labels;
  m.vartheta.assign(n_areas, 0.0);

  FeatureMatrix ones;
  ones.rows = n;
  ones.cols = 1;
  ones.values.assign(n, 1.0);

  std::vector<double> ystar(n), ystar2(n);
  double gll_prev = 0.0;

  for (int iter = 1; iter <= em.iter_max; ++iter) {
    for (std::size_t i = 0; i < n; ++i)
      ystar[i] = sample.y[i] - m.beta0 - m.vartheta[sample.area_of_row[i]];

    Rng rng(derive_seed(seed, "boost", static_cast<std::uint64_t>(iter - 1)));
    m.ensemble = gbdt::fit_boosted(sample.x, ystar, params, rng, mode);

    std::vector<double> fhat = m.ensemble.predict(sample.x);
    for (std::size_t i = 0; i < n; ++i) ystar2[i] = sample.y[i] - fhat[i];

    lmm::LmmFit fit = lmm::fit_ml(ystar2, ones, sample.area_of_row, n_areas);
    m.beta0 = fit.beta[0];
    m.vartheta = fit.vartheta;
    m.sigma_eps2 = fit.sigma_eps2;
    m.sigma_v2 = fit.sigma_v2;

    double g = gll(m, sample);
    m.gll_trace.push_back(g);
    m.iterations = iter;

    bool stop = false;
    if (!std::isfinite(em.tol)) {
      // no finite tolerance to beat: a single alternation is the fixpoint
      stop = true;
    } else if (iter >= 2) {
      double change = gll_prev != 0.0 ? std::abs((g - gll_prev) / gll_prev)
                                      : std::abs(g - gll_prev);
      stop = change < em.tol;
    }
    gll_prev = g;
    if (stop) {
      m.converged = true;
      break;
    }
  }
  return m;
}

double gll(const MegbModel& model, const SurveySample& sample) {
  if (!(model.sigma_eps2 > 0.0))
    throw Error("gll: sigma_eps2 must be positive");
  if (!(model.sigma_v2 >= 0.0)) throw Error("gll: sigma_v2 must be nonnegative");
  check_same_areas(model, sample);

  std::vector<double> fhat = model.ensemble.predict(sample.x);
  const double log_se = std::log(model.sigma_eps2);
  const bool with_v = model.sigma_v2 > 0.0;
  const double log_sv = with_v ? std::log(model.sigma_v2) : 0.0;

  double acc = 0.0;
  for (std::size_t i = 0; i < sample.n_rows(); ++i) {
    double vt = model.vartheta[sample.area_of_row[i]];
    double e = sample.y[i] - fhat[i] - vt - model.beta0;
    acc += e * e / model.sigma_eps2 + log_se;
    if (with_v) acc += vt * vt / model.sigma_v2 + log_sv;
  }
  return acc;
}

std::vector<double> predict_units(const MegbModel& model, const CensusFrame& census) {
  census.validate();
  std::vector<double> fhat = model.ensemble.predict(census.x);
  std::vector<double> out(census.n_rows());
  for (std::size_t d = 0; d < census.areas.n_areas(); ++d) {
    int sd = model.sampled_area_id(census.areas.labels[d]);
    if (sd >= 0) {
      double vt = model.vartheta[sd];
      for (std::size_t r : census.areas.rows[d]) out[r] = fhat[r] + model.beta0 + vt;
    } else {
      for (std::size_t r : census.areas.rows[d]) out[r] = fhat[r] + model.beta0;
    }
  }
  return out;
}

std::vector<double> area_means(const MegbModel& model, const CensusFrame& census) {
  std::vector<double> units = predict_units(model, census);
  std::vector<double> mu(census.areas.n_areas());
  for (std::size_t d = 0; d < census.areas.n_areas(); ++d) {
    const auto& rows = census.areas.rows[d];
    double s = 0.0;
    for (std::size_t r : rows) s += units[r];
    mu[d] = s / static_cast<double>(rows.size());
  }
  return mu;
}

std::vector<double> area_totals(const MegbModel& model, const CensusFrame& census) {
  std::vector<double> mu = area_means(model, census);
  for (std::size_t d = 0; d < census.areas.n_areas(); ++d)
    mu[d] *= static_cast<double>(census.areas.rows[d].size());
  return mu;
}

void save_model(const std::string& path, const MegbModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");

  out << "saeboost model v1\n";
  out << "beta0 " << format_double(model.beta0) << '\n';
  out << "sigma_eps2 " << format_double(model.sigma_eps2) << '\n';
  out << "sigma_v2 " << format_double(model.sigma_v2) << '\n';
  out << "iterations " << model.iterations << '\n';
  out << "converged " << (model.converged ? 1 : 0) << '\n';
  out << "em_tol " << format_double(model.em.tol) << '\n';
  out << "em_iter_max " << model.em.iter_max << '\n';
  const Hyperparams& p = model.params;
  out << "eta " << format_double(p.eta) << '\n';
  out << "max_depth " << p.max_depth << '\n';
  out << "min_child_weight " << format_double(p.min_child_weight) << '\n';
  out << "subsample " << format_double(p.subsample) << '\n';
  out << "colsample_bytree " << format_double(p.colsample_bytree) << '\n';
  out << "lambda " << format_double(p.lambda) << '\n';
  out << "gamma " << format_double(p.gamma) << '\n';
  out << "max_rounds " << p.max_rounds << '\n';
  out << "early_stop_patience " << p.early_stop_patience << '\n';
  out << "cv_fraction " << format_double(p.cv_fraction) << '\n';
  out << "gll_trace";
  for (double g : model.gll_trace) out << ' ' << format_double(g);
  out << '\n';
  out << "areas " << model.area_labels.size() << '\n';
  for (std::size_t d = 0; d < model.area_labels.size(); ++d)
    out << "area " << format_double(model.vartheta[d]) << ' ' << model.area_labels[d]
        << '\n';
  gbdt::serialize_ensemble(out, model.ensemble);
  if (!out) throw Error("short write to '" + path + "'");
}

namespace {

std::string next_content_line(std::istream& in, const std::string& origin) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) return line;
  }
  throw Error(origin + ": unexpected end of model file");
}

std::string expect_key(std::istream& in, const std::string& origin, const char* key) {
  std::string line = next_content_line(in, origin);
  std::string_view v(line);
  std::size_t sp = v.find(' ');
  if (sp == std::string_view::npos || v.substr(0, sp) != key)
    throw Error(origin + ": expected '" + key + " <value>', got '" + line + "'");
  return std::string(trim(v.substr(sp + 1)));
}

}  // namespace

MegbModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");

  if (next_content_line(in, path) != "saeboost model v1")
    throw Error(path + ": not a saeboost model file");

  MegbModel m;
  m.beta0 = parse_double(expect_key(in, path, "beta0"), path);
  m.sigma_eps2 = parse_double(expect_key(in, path, "sigma_eps2"), path);
  m.sigma_v2 = parse_double(expect_key(in, path, "sigma_v2"), path);
  m.iterations = static_cast<int>(parse_long(expect_key(in, path, "iterations"), path));
  m.converged = parse_long(expect_key(in, path, "converged"), path) != 0;
  m.em.tol = parse_double(expect_key(in, path, "em_tol"), path);
  m.em.iter_max =
      static_cast<int>(parse_long(expect_key(in, path, "em_iter_max"), path));
  m.params.eta = parse_double(expect_key(in, path, "eta"), path);
  m.params.max_depth =
      static_cast<int>(parse_long(expect_key(in, path, "max_depth"), path));
  m.params.min_child_weight =
      parse_double(expect_key(in, path, "min_child_weight"), path);
  m.params.subsample = parse_double(expect_key(in, path, "subsample"), path);
  m.params.colsample_bytree =
      parse_double(expect_key(in, path, "colsample_bytree"), path);
  m.params.lambda = parse_double(expect_key(in, path, "lambda"), path);
  m.params.gamma = parse_double(expect_key(in, path, "gamma"), path);
  m.params.max_rounds =
      static_cast<int>(parse_long(expect_key(in, path, "max_rounds"), path));
  m.params.early_stop_patience =
      static_cast<int>(parse_long(expect_key(in, path, "early_stop_patience"), path));
  m.params.cv_fraction = parse_double(expect_key(in, path, "cv_fraction"), path);

  {
    std::string line = next_content_line(in, path);
    auto fields = split_ws(line);
    if (fields.empty() || fields[0] != "gll_trace")
      throw Error(path + ": expected gll_trace line");
    for (std::size_t i = 1; i < fields.size(); ++i)
      m.gll_trace.push_back(parse_double(fields[i], path));
  }

  long n_areas = parse_long(expect_key(in, path, "areas"), path);
  if (n_areas < 1) throw Error(path + ": model must cover at least one area");
  for (long d = 0; d < n_areas; ++d) {
    std::string line = next_content_line(in, path);
    std::string_view v(line);
    if (v.substr(0, 5) != "area ")
      throw Error(path + ": expected 'area <vartheta> <label>'");
    v.remove_prefix(5);
    std::size_t sp = v.find(' ');
    if (sp == std::string_view::npos)
      throw Error(path + ": malformed area line '" + line + "'");
    m.vartheta.push_back(parse_double(v.substr(0, sp), path));
    std::string label(trim(v.substr(sp + 1)));
    if (label.empty()) throw Error(path + ": empty area label in model");
    m.area_labels.push_back(label);
  }

  m.ensemble = gbdt::parse_ensemble(in, path);

  m.params.validate();
  m.em.validate();
  if (!(m.sigma_eps2 >= 0.0) || !(m.sigma_v2 >= 0.0))
    throw Error(path + ": negative variance component");
  if (static_cast<int>(m.gll_trace.size()) != m.iterations)
    throw Error(path + ": trace length does not match iterations");
  return m;
}

TuneGrid default_tune_grid() {
  TuneGrid g;
  g.eta = {0.005, 0.01, 0.05, 0.1};
  g.max_depth = {2, 3, 4, 6};
  g.min_child_weight = {1.0, 3.0, 5.0};
  g.subsample = {0.5, 0.7, 1.0};
  g.colsample_bytree = {0.6, 0.8, 1.0};
  g.lambda = {0.5, 1.0, 2.0};
  g.gamma = {0.0, 0.3, 0.9};
  return g;
}

std::vector<TunableParam> default_tune_order() {
  return {TunableParam::eta,       TunableParam::max_depth,
          TunableParam::min_child_weight, TunableParam::subsample,
          TunableParam::colsample_bytree, TunableParam::lambda,
          TunableParam::gamma};
}

const char* tunable_param_name(TunableParam p) {
  switch (p) {
    case TunableParam::eta: return "eta";
    case TunableParam::max_depth: return "max_depth";
    case TunableParam::min_child_weight: return "min_child_weight";
    case TunableParam::subsample: return "subsample";
    case TunableParam::colsample_bytree: return "colsample_bytree";
    case TunableParam::lambda: return "lambda";
    case TunableParam::gamma: return "gamma";
  }
  return "?";
}

namespace {

std::vector<double> grid_candidates(const TuneGrid& grid, TunableParam p) {
  switch (p) {
    case TunableParam::eta: return grid.eta;
    case TunableParam::max_depth: {
      std::vector<double> v;
      for (int d : grid.max_depth) v.push_back(d);
      return v;
    }
    case TunableParam::min_child_weight: return grid.min_child_weight;
    case TunableParam::subsample: return grid.subsample;
    case TunableParam::colsample_bytree: return grid.colsample_bytree;
    case TunableParam::lambda: return grid.lambda;
    case TunableParam::gamma: return grid.gamma;
  }
  return {};
}

void apply_candidate(Hyperparams& p, TunableParam which, double value) {
  switch (which) {
    case TunableParam::eta: p.eta = value; break;
    case TunableParam::max_depth: p.max_depth = static_cast<int>(value); break;
    case TunableParam::min_child_weight: p.min_child_weight = value; break;
    case TunableParam::subsample: p.subsample = value; break;
    case TunableParam::colsample_bytree: p.colsample_bytree = value; break;
    case TunableParam::lambda: p.lambda = value; break;
    case TunableParam::gamma: p.gamma = value; break;
  }
}

}  // namespace

Hyperparams tune_sequential(const SurveySample& sample, const TuneGrid& grid,
                            std::span<const TunableParam> order,
                            const Hyperparams& start, std::uint64_t seed,
                            std::vector<TuneStep>* log) {
  sample.validate();
  start.validate();
  if (order.empty()) throw Error("tune: empty parameter order");

  Hyperparams cur = start;
  std::uint64_t step_idx = 0;
  for (TunableParam which : order) {
    std::vector<double> cands = grid_candidates(grid, which);
    if (cands.empty())
      throw Error(std::string("tune: empty candidate list for ") +
                  tunable_param_name(which));

    TuneStep step;
    step.param = which;
    step.candidates = cands;
    double best_rmse = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
      Hyperparams trial = cur;
      apply_candidate(trial, which, cands[ci]);
      trial.validate();
      Rng rng(derive_seed(seed, "tune", step_idx));
      gbdt::EarlyStopInfo info;
      gbdt::fit_boosted(sample.x, sample.y, trial, rng, gbdt::SplitSearch::parallel,
                        &info);
      step.holdout_rmse.push_back(info.best_holdout_rmse);
      if (info.best_holdout_rmse < best_rmse) {
        best_rmse = info.best_holdout_rmse;
        step.chosen = static_cast<int>(ci);
      }
    }
    apply_candidate(cur, which, cands[static_cast<std::size_t>(step.chosen)]);
    if (log) log->push_back(std::move(step));
    ++step_idx;
  }
  return cur;
}

}  // namespace sae::megb
