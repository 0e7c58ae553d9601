// cosgp command-line tool: fit / predict / simulate / cv / score.
//
// Exit codes: 0 success, 1 validation or configuration error, 2 numerical
// failure (non-PSD covariance, rejected chains, non-finite values).

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <cosgp/cosgp.hpp>

namespace {

using cosgp::io::RunConfig;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> method, output, design;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, replicates, k;
  std::optional<double> gamma;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", f.config_path, "Run configuration file");
  if (config_required) opt->required();
  cmd->add_option("--set", f.overrides,
                  "Override a config key (section.key=value); repeatable");
  cmd->add_option("--method", f.method, "Model: cos or block");
  cmd->add_option("--output", f.output, "Output directory");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--gamma", f.gamma, "Taper range for the cos method");
}

RunConfig resolve_config(const CommonFlags& f, bool allow_both_method = false) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = cosgp::io::load_config(f.config_path);
  for (const auto& o : f.overrides) cosgp::io::apply_override(cfg, o);
  if (f.method) cfg.method = *f.method;
  if (f.output) cfg.output = *f.output;
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.design) cfg.design = *f.design;
  if (f.replicates) cfg.replicates = *f.replicates;
  if (f.k) cfg.k = *f.k;
  cfg.validate_common(allow_both_method);
  return cfg;
}

void require_output(const RunConfig& cfg) {
  if (cfg.output.empty()) {
    throw cosgp::ValidationError("an output directory is required (run.output or --output)");
  }
}

/// Loads grid + observed regions + outcomes into a modeling dataset;
/// outcomes are matched to regions by id and missing ids are reported together.
cosgp::workflow::Dataset load_dataset(const RunConfig& cfg) {
  cfg.require_paths({{"grid", &cfg.grid}, {"regions", &cfg.regions}, {"outcomes", &cfg.outcomes}});
  cosgp::io::GridFile gf = cosgp::io::load_grid_csv(cfg.grid);
  std::vector<cosgp::supports::SupportRegion> regions = cosgp::io::load_regions_any(cfg.regions);
  const auto outcomes = cosgp::io::load_outcomes_csv(cfg.outcomes);

  Eigen::VectorXd y(static_cast<Eigen::Index>(regions.size()));
  std::string missing;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto it = outcomes.find(regions[i].id);
    if (it == outcomes.end()) {
      missing += (missing.empty() ? "" : ", ") + regions[i].id;
    } else {
      y[static_cast<Eigen::Index>(i)] = it->second;
    }
  }
  if (!missing.empty()) {
    throw cosgp::MissingOutcome("no outcome value for region(s): " + missing);
  }
  return {std::move(gf.grid), std::move(regions), std::move(y)};
}

void print_fit_summary(const cosgp::workflow::FitResult& fit) {
  const auto& d = fit.draws.theta;
  auto post_median = [&](int col) {
    std::vector<double> v(d.draws.col(col).data(), d.draws.col(col).data() + d.G());
    std::sort(v.begin(), v.end());
    return cosgp::quantile_sorted(v, 0.5);
  };
  std::cout << "fit: " << d.G() << " draws (" << d.n_chains << " chains x " << d.per_chain
            << ")\n"
            << "posterior medians: sigma2 = " << post_median(0)
            << ", tau2 = " << post_median(1) << ", phi = " << post_median(2) << "\n";
  if (d.diag.computed) {
    std::cout << "split R-hat: sigma2 = " << d.diag.rhat[0] << ", tau2 = " << d.diag.rhat[1]
              << ", phi = " << d.diag.rhat[2] << "\n";
  }
  for (const auto& w : d.diag.warnings) std::cout << "warning: " << w << "\n";
}

int cmd_fit(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  require_output(cfg);
  const cosgp::workflow::Dataset data = load_dataset(cfg);
  const int n_coef = static_cast<int>(data.grid.design.cols());

  const cosgp::workflow::FitResult fit =
      cosgp::workflow::fit_model(data, cfg.method_config(n_coef), cfg.mcmc_config());

  cosgp::io::ArtifactWriter out(cfg.output, cfg.canonical(), cfg.fit_hash(), cfg.seed);
  out.write("theta.csv", cosgp::io::theta_csv_text(fit.draws.theta));
  out.write("beta_omega.csv",
            cosgp::io::beta_omega_csv_text(fit.draws, fit.obs_map.region_ids));
  out.write_json("diagnostics.json", cosgp::io::diagnostics_json(fit.draws.theta));
  out.finish();
  print_fit_summary(fit);
  std::cout << "wrote " << out.dir() << "\n";
  return 0;
}

int cmd_predict(const CommonFlags& flags, const std::string& fit_dir) {
  const RunConfig cfg = resolve_config(flags);
  require_output(cfg);

  const nlohmann::json manifest = cosgp::io::load_manifest(fit_dir);
  const std::string fit_hash = cosgp::io::hash_hex(cfg.fit_hash());
  const std::string seen = manifest.value("config_hash", "");
  if (seen != fit_hash) {
    throw cosgp::HashMismatch("fit artifacts in " + fit_dir + " were produced by a different "
                              "configuration (hash " + seen + ", current " + fit_hash + ")");
  }

  const cosgp::workflow::Dataset data = load_dataset(cfg);
  const int n_coef = static_cast<int>(data.grid.design.cols());
  cosgp::workflow::FitResult fit =
      cosgp::workflow::prepare_model(data, cfg.method_config(n_coef));
  {
    namespace fs = std::filesystem;
    const cosgp::sampler::ThetaDraws theta =
        cosgp::io::load_theta_csv((fs::path(fit_dir) / "theta.csv").string());
    fit.draws = cosgp::io::load_beta_omega_csv(
        (fs::path(fit_dir) / "beta_omega.csv").string(), theta, fit.obs_map.region_ids,
        n_coef);
  }

  std::vector<cosgp::supports::SupportRegion> pred;
  if (cfg.predict.empty()) {
    std::cout << "warning: no prediction regions configured (data.predict); writing empty "
                 "outputs\n";
  } else {
    try {
      pred = cosgp::io::load_regions_any(cfg.predict,
                                         cosgp::supports::SupportRegion::Role::prediction);
    } catch (const cosgp::EmptyInput&) {
      std::cout << "warning: prediction region set is empty; writing empty outputs\n";
    }
  }

  cosgp::io::ArtifactWriter out(cfg.output, cfg.canonical(), cfg.fit_hash(), cfg.seed);
  if (pred.empty()) {
    out.write("pred_draws.csv", "g,region_id,value\n");
    out.write("pred_summary.csv", "region_id,median,lo,hi\n");
    out.finish();
    std::cout << "wrote " << out.dir() << "\n";
    return 0;
  }

  const auto [draws, pred_map] =
      cosgp::workflow::predict_model_with_map(fit, std::move(pred), cfg.seed);
  out.write("pred_draws.csv", cosgp::io::pred_draws_csv_text(draws));
  out.write("pred_summary.csv", cosgp::io::pred_summary_csv_text(draws));
  if (!cfg.grouping.empty()) {
    const auto grouping = cosgp::io::load_grouping_csv(cfg.grouping);
    const auto totals = cosgp::posterior::aggregate_totals(draws, pred_map, grouping);
    out.write("totals.csv", cosgp::io::totals_csv_text(totals));
  }
  out.finish();
  std::cout << "predicted " << draws.n_regions() << " region(s), " << draws.G()
            << " draws each\n"
            << "wrote " << out.dir() << "\n";
  return 0;
}

int cmd_simulate(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags, /*allow_both_method=*/true);
  require_output(cfg);
  if (cfg.design != "small" && cfg.design != "large" && cfg.design != "both") {
    throw cosgp::ValidationError("simulate.design must be small, large, or both, got '" +
                                 cfg.design + "'");
  }
  if (cfg.replicates < 1) throw cosgp::ValidationError("simulate.replicates must be >= 1");
  const bool run_cos = cfg.method == "cos" || cfg.method == "both";
  const bool run_block = cfg.method == "block" || cfg.method == "both";
  if (!run_cos && !run_block) {
    throw cosgp::ValidationError("simulate --method must be cos, block, or both");
  }

  cosgp::experiments::SimDesign design;
  if (!cfg.layout.empty()) design.layout = cosgp::io::load_layout_csv(cfg.layout);
  design.gamma = cfg.gamma;
  design.replicates = cfg.replicates;

  cosgp::io::ArtifactWriter out(cfg.output, cfg.canonical(), cfg.fit_hash(), cfg.seed);
  nlohmann::json aggregate;
  aggregate["replicates"] = cfg.replicates;
  aggregate["design"] = cfg.design;

  auto run_method = [&](cosgp::workflow::Method method) {
    const std::string name = cosgp::workflow::method_name(method);
    std::cout << "running " << cfg.replicates << " replicate(s) with method " << name
              << "...\n";
    const cosgp::experiments::StudyResult study = cosgp::experiments::run_ok_study(
        design, method, cfg.mcmc_config(), cfg.effective_threads());

    std::ostringstream rep_csv;
    rep_csv << "replicate,unit,error,covered,width,crps\n";
    static const char* unit_names[4] = {"O", "K", "O_large", "K_large"};
    for (int r = 0; r < study.replicates; ++r) {
      for (int u = 0; u < 4; ++u) {
        const auto& ur = study.per_replicate[r][u];
        rep_csv << r << ',' << unit_names[u] << ',' << cosgp::io::format_double(ur.error)
                << ',' << (ur.covered ? 1 : 0) << ',' << cosgp::io::format_double(ur.width)
                << ',' << cosgp::io::format_double(ur.crps) << '\n';
      }
    }
    out.write("replicates_" + name + ".csv", rep_csv.str());

    nlohmann::json method_json;
    method_json["mean_fit_seconds"] = study.mean_fit_seconds;
    method_json["theta_ci_covered"] = {{"sigma2", study.theta_covered[0]},
                                       {"tau2", study.theta_covered[1]},
                                       {"phi", study.theta_covered[2]}};
    auto emit = [&](const std::string& design_name, const cosgp::metrics::ScoreReport& rep) {
      out.write("score_" + name + "_" + design_name + ".csv", cosgp::io::score_csv_text(rep));
      method_json["score_" + design_name] = cosgp::io::score_json(rep);
      std::cout << "[" << name << " / " << design_name << "]\n"
                << cosgp::io::score_csv_text(rep);
    };
    if (cfg.design != "large") emit("small", study.small);
    if (cfg.design != "small") emit("large", study.large);
    aggregate[name] = method_json;
  };

  if (run_cos) run_method(cosgp::workflow::Method::cos);
  if (run_block) run_method(cosgp::workflow::Method::block);
  out.write_json("aggregate.json", aggregate);
  out.finish();
  std::cout << "wrote " << out.dir() << "\n";
  return 0;
}

int cmd_cv(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  require_output(cfg);
  const cosgp::workflow::Dataset data = load_dataset(cfg);
  const int n_coef = static_cast<int>(data.grid.design.cols());

  const cosgp::experiments::CvResult cv = cosgp::experiments::run_cross_validation(
      data, cfg.k, cfg.method_config(n_coef), cfg.mcmc_config());

  cosgp::io::ArtifactWriter out(cfg.output, cfg.canonical(), cfg.fit_hash(), cfg.seed);
  std::ostringstream region_csv;
  region_csv << "region_id,fold,error,covered,width,crps\n";
  for (const auto& r : cv.regions) {
    region_csv << r.region_id << ',' << r.fold << ',' << cosgp::io::format_double(r.error)
               << ',' << (r.covered ? 1 : 0) << ',' << cosgp::io::format_double(r.width)
               << ',' << cosgp::io::format_double(r.crps) << '\n';
  }
  out.write("cv_regions.csv", region_csv.str());
  out.write("cv_score.csv", cosgp::io::score_csv_text(cv.pooled));
  out.write_json("cv_score.json", cosgp::io::score_json(cv.pooled));
  out.finish();
  std::cout << cfg.k << "-fold cross-validation (" << cv.regions.size() << " regions)\n"
            << cosgp::io::score_csv_text(cv.pooled) << "wrote " << out.dir() << "\n";
  return 0;
}

int cmd_score(const std::string& draws_path, const std::string& outcomes_path,
              const std::string& output_dir) {
  const cosgp::posterior::PredictiveDraws pred = cosgp::io::load_pred_draws_csv(draws_path);
  const auto outcomes = cosgp::io::load_outcomes_csv(outcomes_path);

  cosgp::metrics::ScoreReport report;
  report.n_replicates = 1;
  for (int j = 0; j < pred.n_regions(); ++j) {
    const std::string& id = pred.region_ids[static_cast<std::size_t>(j)];
    const auto it = outcomes.find(id);
    if (it == outcomes.end()) {
      throw cosgp::MissingOutcome("no outcome value for region(s): " + id);
    }
    std::vector<double> samples(pred.y_u.col(j).data(), pred.y_u.col(j).data() + pred.G());
    double mean = 0.0;
    for (const double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    const std::vector<double> err{mean - it->second};
    const cosgp::metrics::Interval ci = cosgp::metrics::ci_cover_width(samples, it->second);
    report.targets.push_back(cosgp::metrics::TargetScore{
        id, cosgp::metrics::rmspe(err), cosgp::metrics::mpe(err),
        cosgp::metrics::crps_empirical(samples, it->second), ci.covered ? 1.0 : 0.0,
        ci.width()});
  }
  report.finalize();

  const std::string csv = cosgp::io::score_csv_text(report);
  if (output_dir.empty()) {
    std::cout << csv;
  } else {
    cosgp::io::ensure_dir(output_dir);
    cosgp::io::write_file(
        (std::filesystem::path(output_dir) / "score.csv").string(), csv);
    cosgp::io::write_file(
        (std::filesystem::path(output_dir) / "score.json").string(),
        cosgp::io::score_json(report).dump(2) + "\n");
    std::cout << "wrote " << output_dir << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cosgp: Bayesian spatial change-of-support regression"};
  app.require_subcommand(1);

  CommonFlags fit_flags, predict_flags, sim_flags, cv_flags;
  std::string fit_dir, score_draws, score_outcomes, score_output;

  CLI::App* fit = app.add_subcommand("fit", "Fit the model to observed regions");
  add_common(fit, fit_flags, /*config_required=*/true);

  CLI::App* predict = app.add_subcommand("predict", "Predict new regions from a fit");
  add_common(predict, predict_flags, /*config_required=*/true);
  predict->add_option("--fit", fit_dir, "Directory holding fit artifacts")->required();

  CLI::App* simulate =
      app.add_subcommand("simulate", "Run the replicated simulation study");
  add_common(simulate, sim_flags, /*config_required=*/false);
  simulate->add_option("--design", sim_flags.design,
                       "Which prediction units to report: small, large, or both");
  simulate->add_option("--replicates", sim_flags.replicates, "Number of replicates");

  CLI::App* cv = app.add_subcommand("cv", "K-fold cross-validation on observed regions");
  add_common(cv, cv_flags, /*config_required=*/true);
  cv->add_option("--k", cv_flags.k, "Number of folds");

  CLI::App* score = app.add_subcommand("score", "Score prediction draws against outcomes");
  score->add_option("--draws", score_draws, "Prediction draw CSV (g,region_id,value)")
      ->required();
  score->add_option("--outcomes", score_outcomes, "Outcome CSV (region_id,value)")
      ->required();
  score->add_option("--output", score_output, "Output directory (default: print to stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_flags);
    if (predict->parsed()) return cmd_predict(predict_flags, fit_dir);
    if (simulate->parsed()) return cmd_simulate(sim_flags);
    if (cv->parsed()) return cmd_cv(cv_flags);
    if (score->parsed()) return cmd_score(score_draws, score_outcomes, score_output);
  } catch (const cosgp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const cosgp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
