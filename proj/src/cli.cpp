#include "saeboost/cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "saeboost/csv.hpp"
#include "saeboost/megb.hpp"
#include "saeboost/rebb.hpp"
#include "saeboost/rng.hpp"
#include "saeboost/simlab.hpp"
#include "saeboost/textio.hpp"

namespace sae {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config_path;  // registered for --help only; expanded before parse
  std::string survey, census, model_path;
  std::string out_dir = ".";
  std::string area_col = "area", response_col = "y", pi_col;
  std::vector<std::string> covariates;
  std::uint64_t seed = 0;
  int b = 0;
  int n_mc = 1;
  std::string scenario;
  std::vector<std::string> estimators = {"HT", "BHF", "MEGB"};
  int areas = 50;
  int units_per_area = 1000;
  std::vector<int> allocation;
  bool serial = false;
  bool per_area_donors = false;
  Hyperparams hp;
  megb::EmConfig em;
  megb::TuneGrid grid = megb::default_tune_grid();
};

bool has_option(const std::vector<std::string>& args, const std::string& key) {
  std::string full = "--" + key;
  std::string prefixed = full + "=";
  for (const auto& a : args)
    if (a == full || a.rfind(prefixed, 0) == 0) return true;
  return false;
}

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto where = [&] { return path + ":" + std::to_string(lineno) + ": "; };
    std::size_t eq = t.find('=');
    if (eq == std::string_view::npos)
      throw Error(where() + "expected key=value");
    std::string key(trim(t.substr(0, eq)));
    std::string value(trim(t.substr(eq + 1)));
    if (key.empty()) throw Error(where() + "empty key");
    if (key == "config") throw Error(where() + "config files cannot chain");
    for (const auto& e : entries)
      if (e.first == key) throw Error(where() + "duplicate key '" + key + "'");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

// Strips --config from the raw arguments and appends key=value entries from
// the file as --key=value tokens, skipping keys already given (flags win).
std::vector<std::string> expand_args(int argc, const char* const* argv) {
  std::vector<std::string> base;
  std::string config_path;
  bool have_config = false;
  auto set_config = [&](std::string p) {
    if (have_config) throw Error("--config given more than once");
    config_path = std::move(p);
    have_config = true;
  };
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config") {
      if (i + 1 >= argc) throw Error("--config requires a file path");
      set_config(argv[++i]);
    } else if (a.rfind("--config=", 0) == 0) {
      set_config(a.substr(9));
    } else {
      base.push_back(std::move(a));
    }
  }
  if (have_config)
    for (auto& [key, value] : read_config_file(config_path))
      if (!has_option(base, key)) base.push_back("--" + key + "=" + value);
  return base;
}

// Default covariate set: every header column except area/response/pi.
std::vector<std::string> derive_covariates(const std::string& path,
                                           const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  auto rows = read_csv_rows(in, path);
  if (rows.empty()) throw Error(path + ": empty file");
  std::vector<std::string> covs;
  for (const auto& name : rows[0]) {
    if (name == schema.area_col || name == schema.response_col) continue;
    if (!schema.pi_col.empty() && name == schema.pi_col) continue;
    covs.push_back(name);
  }
  if (covs.empty())
    throw Error(path + ": no covariate columns remain after excluding '" +
                schema.area_col + "'/'" + schema.response_col + "'");
  return covs;
}

CsvSchema make_schema(const Flags& f, const std::string& path) {
  CsvSchema s;
  s.area_col = f.area_col;
  s.response_col = f.response_col;
  s.pi_col = f.pi_col;
  s.covariate_cols = f.covariates.empty() ? derive_covariates(path, s) : f.covariates;
  return s;
}

std::ofstream open_output(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);  // byte-stable across platforms
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

void add_schema_options(CLI::App* cmd, Flags& f, bool with_pi) {
  cmd->add_option("--area-col", f.area_col, "area id column")
      ->capture_default_str();
  cmd->add_option("--response-col", f.response_col, "response column")
      ->capture_default_str();
  cmd->add_option("--covariates", f.covariates,
                  "covariate columns in feature order (default: all other columns)")
      ->delimiter(',');
  if (with_pi)
    cmd->add_option("--pi-col", f.pi_col, "inclusion probability column");
}

void add_hyper_options(CLI::App* cmd, Flags& f) {
  cmd->add_option("--eta", f.hp.eta, "learning rate")->capture_default_str();
  cmd->add_option("--max-depth", f.hp.max_depth, "tree depth limit")
      ->capture_default_str();
  cmd->add_option("--min-child-weight", f.hp.min_child_weight,
                  "minimum child hessian sum")
      ->capture_default_str();
  cmd->add_option("--subsample", f.hp.subsample, "row subsample fraction per round")
      ->capture_default_str();
  cmd->add_option("--colsample-bytree", f.hp.colsample_bytree,
                  "feature subsample fraction per round")
      ->capture_default_str();
  cmd->add_option("--lambda", f.hp.lambda, "L2 penalty on leaf weights")
      ->capture_default_str();
  cmd->add_option("--gamma", f.hp.gamma, "minimum split gain")
      ->capture_default_str();
  cmd->add_option("--max-rounds", f.hp.max_rounds, "boosting round cap")
      ->capture_default_str();
  cmd->add_option("--early-stop-patience", f.hp.early_stop_patience,
                  "rounds without holdout improvement before stopping")
      ->capture_default_str();
  cmd->add_option("--cv-fraction", f.hp.cv_fraction, "holdout fraction")
      ->capture_default_str();
}

void add_em_options(CLI::App* cmd, Flags& f) {
  cmd->add_option("--tol", f.em.tol,
                  "relative generalized-loss change to stop at (inf = one pass)")
      ->capture_default_str();
  cmd->add_option("--iter-max", f.em.iter_max, "alternation pass cap")
      ->capture_default_str();
}

void add_config_option(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path,
                  "key=value option file; command-line flags take precedence");
}

gbdt::SplitSearch split_mode(const Flags& f) {
  return f.serial ? gbdt::SplitSearch::serial : gbdt::SplitSearch::parallel;
}

int cmd_fit(const Flags& f, std::ostream& err) {
  CsvSchema schema = make_schema(f, f.survey);
  SurveySample sample = load_survey_csv(f.survey, schema);
  std::uint64_t seed = derive_seed(f.seed, "fit");
  megb::MegbModel model = megb::fit_megb(sample, f.hp, f.em, seed, split_mode(f));

  fs::create_directories(f.out_dir);
  megb::save_model((fs::path(f.out_dir) / "model.txt").string(), model);

  std::ofstream rep = open_output(fs::path(f.out_dir) / "fit_report.txt");
  rep << "fit report\n";
  rep << "survey " << f.survey << "\n";
  rep << "rows " << sample.n_rows() << "\n";
  rep << "features " << sample.n_features() << "\n";
  rep << "areas " << sample.areas.n_areas() << "\n";
  rep << "seed " << f.seed << " (stream \"fit\")\n";
  rep << "iterations " << model.iterations << "\n";
  rep << "converged " << (model.converged ? "yes" : "no") << "\n";
  rep << "beta0 " << format_double(model.beta0) << "\n";
  rep << "sigma_eps2 " << format_double(model.sigma_eps2) << "\n";
  rep << "sigma_v2 " << format_double(model.sigma_v2) << "\n";
  rep << "boosting_rounds " << model.ensemble.n_rounds_used << "\n";
  rep << "gll_trace\n";
  for (std::size_t i = 0; i < model.gll_trace.size(); ++i)
    rep << i + 1 << " " << format_double(model.gll_trace[i]) << "\n";
  err << "fit: " << model.iterations << " passes, model written to " << f.out_dir
      << "\n";
  return 0;
}

int cmd_predict(const Flags& f, std::ostream& err) {
  megb::MegbModel model = megb::load_model(f.model_path);
  CsvSchema schema = make_schema(f, f.census);
  CensusFrame census = load_census_csv(f.census, schema);
  std::vector<double> mu = megb::area_means(model, census);
  std::vector<double> tot = megb::area_totals(model, census);

  fs::create_directories(f.out_dir);
  std::ofstream out = open_output(fs::path(f.out_dir) / "area_estimates.csv");
  write_csv_row(out, {"area_id", "mu_hat", "total_hat", "in_sample"});
  for (std::size_t d = 0; d < census.areas.n_areas(); ++d) {
    bool ins = model.sampled_area_id(census.areas.labels[d]) >= 0;
    write_csv_row(out, {census.areas.labels[d], format_double(mu[d]),
                        format_double(tot[d]), ins ? "1" : "0"});
  }
  err << "predict: " << census.areas.n_areas() << " areas written to " << f.out_dir
      << "\n";
  return 0;
}

int cmd_mse(const Flags& f, std::ostream& err) {
  if (f.b < 1) throw Error("mse: --b must be at least 1");
  megb::MegbModel model = megb::load_model(f.model_path);
  CsvSchema schema = make_schema(f, f.survey);
  SurveySample sample = load_survey_csv(f.survey, schema);
  CensusFrame census = load_census_csv(f.census, schema);

  rebb::RebbOptions opts;
  opts.donors =
      f.per_area_donors ? rebb::Level1Donors::per_area : rebb::Level1Donors::pooled;
  opts.parallel = !f.serial;
  opts.on_replicate = [&](int rep) {
    err << "replicate " << rep + 1 << " of " << f.b << " done\n";
  };
  rebb::BootstrapResult res = rebb::bootstrap_mse(
      model, sample, census, f.b, derive_seed(f.seed, "bootstrap"), opts);

  fs::create_directories(f.out_dir);
  std::ofstream out = open_output(fs::path(f.out_dir) / "mse.csv");
  write_csv_row(out, {"area_id", "mse", "rmse", "B"});
  for (std::size_t d = 0; d < res.area_labels.size(); ++d)
    write_csv_row(out, {res.area_labels[d], format_double(res.mse[d]),
                        format_double(std::sqrt(res.mse[d])), std::to_string(res.b)});
  err << "mse: " << res.area_labels.size() << " areas written to " << f.out_dir
      << "\n";
  return 0;
}

int cmd_simulate(const Flags& f, std::ostream& err) {
  sim::McConfig cfg;
  cfg.scenario = sim::scenario_by_name(f.scenario, f.areas, f.units_per_area);
  for (const auto& name : f.estimators)
    cfg.estimators.push_back(sim::parse_estimator(name));
  cfg.n_runs = f.n_mc;
  cfg.bootstrap_b = f.b;
  cfg.seed = derive_seed(f.seed, "simulate");
  cfg.params = f.hp;
  cfg.em = f.em;
  cfg.allocation = f.allocation;

  sim::McResult res =
      f.serial ? sim::run_monte_carlo_serial(cfg) : sim::run_monte_carlo(cfg);

  fs::create_directories(f.out_dir);
  std::ofstream results = open_output(fs::path(f.out_dir) / "results.csv");
  sim::write_results_csv(results, cfg, res);
  std::ofstream metrics = open_output(fs::path(f.out_dir) / "metrics.csv");
  sim::write_metrics_csv(metrics, cfg, res);
  err << "simulate: " << f.n_mc << " runs of " << f.scenario << " written to "
      << f.out_dir << "\n";
  return 0;
}

int cmd_tune(const Flags& f, std::ostream& err) {
  CsvSchema schema = make_schema(f, f.survey);
  SurveySample sample = load_survey_csv(f.survey, schema);
  std::vector<megb::TunableParam> order = megb::default_tune_order();
  std::vector<megb::TuneStep> log;
  Hyperparams tuned = megb::tune_sequential(sample, f.grid, order, f.hp,
                                            derive_seed(f.seed, "tune-cli"), &log);

  fs::create_directories(f.out_dir);
  std::ofstream out = open_output(fs::path(f.out_dir) / "tuned_params.txt");
  out << "eta=" << format_double(tuned.eta) << "\n";
  out << "max-depth=" << tuned.max_depth << "\n";
  out << "min-child-weight=" << format_double(tuned.min_child_weight) << "\n";
  out << "subsample=" << format_double(tuned.subsample) << "\n";
  out << "colsample-bytree=" << format_double(tuned.colsample_bytree) << "\n";
  out << "lambda=" << format_double(tuned.lambda) << "\n";
  out << "gamma=" << format_double(tuned.gamma) << "\n";
  out << "max-rounds=" << tuned.max_rounds << "\n";
  out << "early-stop-patience=" << tuned.early_stop_patience << "\n";
  out << "cv-fraction=" << format_double(tuned.cv_fraction) << "\n";

  std::ofstream tl = open_output(fs::path(f.out_dir) / "tune_log.csv");
  write_csv_row(tl, {"step", "param", "candidate", "holdout_rmse", "chosen"});
  for (std::size_t s = 0; s < log.size(); ++s)
    for (std::size_t c = 0; c < log[s].candidates.size(); ++c)
      write_csv_row(tl, {std::to_string(s + 1), megb::tunable_param_name(log[s].param),
                         format_double(log[s].candidates[c]),
                         format_double(log[s].holdout_rmse[c]),
                         static_cast<int>(c) == log[s].chosen ? "1" : "0"});
  err << "tune: " << log.size() << " steps, parameters written to " << f.out_dir
      << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"small area estimation with boosted trees and random intercepts"};
  app.require_subcommand(1);

  CLI::App* fit = app.add_subcommand(
      "fit", "fit the mixed-effects boosting model on a survey csv");
  fit->add_option("--survey", f.survey, "survey csv")->required();
  fit->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  fit->add_option("--seed", f.seed, "master seed")->capture_default_str();
  fit->add_flag("--serial", f.serial, "use the serial split search");
  add_schema_options(fit, f, true);
  add_hyper_options(fit, f);
  add_em_options(fit, f);
  add_config_option(fit, f);

  CLI::App* predict = app.add_subcommand(
      "predict", "area means and totals for a census csv from a fitted model");
  predict->add_option("--model", f.model_path, "model file from fit")->required();
  predict->add_option("--census", f.census, "census csv")->required();
  predict->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  add_schema_options(predict, f, false);
  add_config_option(predict, f);

  CLI::App* mse = app.add_subcommand(
      "mse", "block-bootstrap mse of the area means for a fitted model");
  mse->add_option("--model", f.model_path, "model file from fit")->required();
  mse->add_option("--survey", f.survey, "survey csv the model was fitted on")
      ->required();
  mse->add_option("--census", f.census, "census csv")->required();
  mse->add_option("--b", f.b, "bootstrap replicates")->required();
  mse->add_option("--seed", f.seed, "master seed")->required();
  mse->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  mse->add_flag("--serial", f.serial, "run replicates sequentially");
  mse->add_flag("--per-area-donors", f.per_area_donors,
                "draw unit-level errors within each area instead of pooled");
  add_schema_options(mse, f, true);
  add_config_option(mse, f);

  CLI::App* simulate = app.add_subcommand(
      "simulate", "monte-carlo study comparing estimators on a named scenario");
  simulate->add_option("--scenario", f.scenario,
                       "Linear-Normal, Complex-Normal, Linear-Pareto or Complex-Pareto")
      ->required();
  simulate->add_option("--seed", f.seed, "master seed")->required();
  simulate
      ->add_option("--estimators", f.estimators,
                   "comma list of HT, BHF, MEGB, MEGB-tuned")
      ->delimiter(',');
  simulate->add_option("--n-mc", f.n_mc, "simulation runs")->capture_default_str();
  simulate->add_option("--b", f.b, "bootstrap replicates per run (0 = none)")
      ->capture_default_str();
  simulate->add_option("--areas", f.areas, "number of areas")->capture_default_str();
  simulate->add_option("--units-per-area", f.units_per_area, "population per area")
      ->capture_default_str();
  simulate
      ->add_option("--allocation", f.allocation,
                   "comma list of per-area sample sizes (default: 6..49 ramp)")
      ->delimiter(',');
  simulate->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  simulate->add_flag("--serial", f.serial, "run sequentially");
  add_hyper_options(simulate, f);
  add_em_options(simulate, f);
  add_config_option(simulate, f);

  CLI::App* tune = app.add_subcommand(
      "tune", "sequential holdout search over the boosting parameters");
  tune->add_option("--survey", f.survey, "survey csv")->required();
  tune->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  tune->add_option("--seed", f.seed, "master seed")->capture_default_str();
  add_schema_options(tune, f, true);
  add_hyper_options(tune, f);
  tune->add_option("--grid-eta", f.grid.eta, "eta candidates")->delimiter(',');
  tune->add_option("--grid-max-depth", f.grid.max_depth, "max-depth candidates")
      ->delimiter(',');
  tune->add_option("--grid-min-child-weight", f.grid.min_child_weight,
                   "min-child-weight candidates")
      ->delimiter(',');
  tune->add_option("--grid-subsample", f.grid.subsample, "subsample candidates")
      ->delimiter(',');
  tune->add_option("--grid-colsample-bytree", f.grid.colsample_bytree,
                   "colsample-bytree candidates")
      ->delimiter(',');
  tune->add_option("--grid-lambda", f.grid.lambda, "lambda candidates")
      ->delimiter(',');
  tune->add_option("--grid-gamma", f.grid.gamma, "gamma candidates")->delimiter(',');
  add_config_option(tune, f);

  try {
    std::vector<std::string> args = expand_args(argc, argv);
    std::vector<const char*> cargv;
    cargv.push_back(argc > 0 ? argv[0] : "saeboost");
    for (const auto& a : args) cargv.push_back(a.c_str());
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    auto parsed = app.get_subcommands();
    if (!parsed.empty()) target = parsed.front();
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (fit->parsed()) return cmd_fit(f, err);
    if (predict->parsed()) return cmd_predict(f, err);
    if (mse->parsed()) return cmd_mse(f, err);
    if (simulate->parsed()) return cmd_simulate(f, err);
    if (tune->parsed()) return cmd_tune(f, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no command given\n";
  return 1;
}

}  // namespace sae
