#include "mve/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "mve/cli_io.hpp"
#include "mve/errors.hpp"
#include "mve/experiments.hpp"
#include "mve/linear_oracle.hpp"
#include "mve/rng.hpp"

namespace mve {

namespace fs = std::filesystem;

namespace {

// Collects outputs of one run and writes the manifest last.
class RunDirectory {
public:
    RunDirectory(fs::path dir, std::string command, std::vector<std::string> argv, std::uint64_t seed)
        : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        manifest_.version = tool_version();
        manifest_.command = std::move(command);
        manifest_.argv = std::move(argv);
        manifest_.seed = seed;
        manifest_.started_utc = utc_timestamp();
    }

    void write(const std::string& name, const std::string& text) {
        write_text_file(dir_ / name, text);
        manifest_.outputs.emplace_back(name, sha256_hex(text));
    }

    RunManifest& manifest() { return manifest_; }
    const fs::path& path() const { return dir_; }

    int finish(int code) {
        manifest_.exit_code = code;
        manifest_.finished_utc = utc_timestamp();
        write_text_file(dir_ / "manifest.json", manifest_.to_json());
        return code;
    }

private:
    fs::path dir_;
    RunManifest manifest_;
};

BatchReduction parse_reduction(const std::string& s) {
    if (s == "mean") return BatchReduction::Mean;
    if (s == "sum") return BatchReduction::Sum;
    throw ConfigError("batch reduction must be 'mean' or 'sum'");
}

// Flags shared by commands that train networks; applied only when given.
struct TrainFlags {
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::string> reduction;
    std::vector<std::size_t> hidden;

    void add_to(CLI::App* app) {
        app->add_option("--epochs", epochs, "Epochs per training stage");
        app->add_option("--batch-size", batch_size, "Mini-batch size");
        app->add_option("--lr", learning_rate, "Adam learning rate");
        app->add_option("--reduction", reduction, "Mini-batch loss reduction: mean or sum");
        app->add_option("--hidden", hidden, "Hidden layer widths of each head, e.g. 40,20")->delimiter(',');
    }

    void apply(TrainConfig& c) const {
        if (epochs) c.epochs_per_stage = *epochs;
        if (batch_size) c.batch_size = *batch_size;
        if (learning_rate) c.adam.learning_rate = *learning_rate;
        if (reduction) c.reduction = parse_reduction(*reduction);
        if (!hidden.empty()) c.arch.hidden = hidden;
    }
};

std::string num(double v) { return format_number(v); }

CsvRow curve_row(const CurveFit& f, std::size_t i) {
    return {num(f.x[i]),        num(f.mean[i]),       num(f.mean[i] - f.stddev[i]), num(f.mean[i] + f.stddev[i]),
            num(f.stddev[i]),   num(f.true_mean[i]),  num(f.true_stddev[i])};
}

std::string curve_csv(const CurveFit& f) {
    std::vector<CsvRow> rows;
    for (std::size_t i = 0; i < f.x.size(); ++i) rows.push_back(curve_row(f, i));
    return to_csv({"x", "mean", "lower", "upper", "stddev", "true_mean", "true_stddev"}, rows);
}

std::string data_csv(const Dataset& d) { return dataset_to_csv(d); }

// ---------------------------------------------------------------- demos

int run_demo_sine(const std::vector<std::uint64_t>& seeds, const SineDemoSettings& settings, RunDirectory& run,
                  std::ostream& out) {
    std::vector<CsvRow> summary;
    std::vector<CsvRow> selection;
    for (std::uint64_t seed : seeds) {
        const Dataset raw = generate({SyntheticKind::Sine, settings.n, derive_seed(seed, {0xD0u})});
        run.write("data_seed" + std::to_string(seed) + ".csv", data_csv(raw));
        for (SineArm arm : kAllSineArms) {
            const SineArmResult r = run_sine_arm(raw, arm, seed, settings);
            const std::string name(sine_arm_name(arm));
            run.manifest().configs.push_back(config_to_text(r.config));
            if (!r.diverged) run.write("fit_" + name + "_seed" + std::to_string(seed) + ".csv", curve_csv(r.fit));
            summary.push_back({std::to_string(seed), name, num(r.config.lambda_mean), num(r.config.lambda_var),
                               num(r.fit.mean_rmse), r.diverged ? "1" : "0"});
            for (const auto& [l, s] : r.selection_scores) selection.push_back({std::to_string(seed), num(l), num(s)});
            out << "seed " << seed << "  " << name << "  lambda_mean=" << r.config.lambda_mean
                << " lambda_var=" << r.config.lambda_var << "  mean RMSE=" << r.fit.mean_rmse
                << (r.diverged ? "  (diverged)" : "") << "\n";
        }
    }
    run.write("summary.csv", to_csv({"seed", "arm", "lambda_mean", "lambda_var", "mean_rmse", "diverged"}, summary));
    if (!selection.empty()) run.write("equal_selection.csv", to_csv({"seed", "lambda", "holdout_loglik"}, selection));
    return run.finish(kExitOk);
}

int run_demo_quadratic(std::uint64_t seed, std::size_t n, const SweepSettings& settings, RunDirectory& run,
                       std::ostream& out) {
    const Dataset raw = generate({SyntheticKind::QuadraticHetero, n, derive_seed(seed, {0xD1u})});
    run.write("data.csv", data_csv(raw));
    const std::vector<SweepPanel> panels = regularization_sweep(raw, seed, settings);
    std::vector<CsvRow> summary;
    for (const SweepPanel& p : panels) {
        run.manifest().configs.push_back(config_to_text(p.config));
        const std::string tag = format_number(p.lambda_var);
        if (!p.diverged) run.write("panel_lambda_var_" + tag + ".csv", curve_csv(p.fit));
        CsvRow row{num(settings.lambda_mean), num(p.lambda_var), num(p.fit.mean_rmse), num(p.fit.variance_ratio())};
        for (double x : {-1.0, 0.0, 1.0}) {
            row.push_back(num(p.fit.stddev_at(x)));
            row.push_back(num(quadratic_stddev(x)));
        }
        row.push_back(p.diverged ? "1" : "0");
        summary.push_back(row);
        out << "lambda_var=" << p.lambda_var << "  mean RMSE=" << p.fit.mean_rmse
            << "  variance max/min=" << p.fit.variance_ratio() << "  sd(-1,0,1)=" << p.fit.stddev_at(-1) << ","
            << p.fit.stddev_at(0) << "," << p.fit.stddev_at(1) << (p.diverged ? "  (diverged)" : "") << "\n";
    }
    run.write("summary.csv", to_csv({"lambda_mean", "lambda_var", "mean_rmse", "variance_ratio", "sd_m1", "true_sd_m1",
                                     "sd_0", "true_sd_0", "sd_p1", "true_sd_p1", "diverged"},
                                    summary));
    return run.finish(kExitOk);
}

int run_demo_landscape(std::uint64_t seed, std::size_t n, double lo, double hi, std::size_t points, RunDirectory& run,
                       std::ostream& out) {
    const Dataset d = generate({SyntheticKind::TwoCluster, n, derive_seed(seed, {0xD2u})});
    run.write("data.csv", data_csv(d));
    const std::vector<double> grid = linspace(lo, hi, points);
    const LandscapeProfile p = nll_profile(d, grid);
    std::vector<CsvRow> rows;
    std::size_t next_min = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const bool is_min = next_min < p.local_minima.size() && p.local_minima[next_min].index == i;
        if (is_min) ++next_min;
        rows.push_back({num(grid[i]), num(p.nll_values[i]), is_min ? "1" : "0"});
    }
    run.write("profile.csv", to_csv({"mu", "nll", "local_minimum"}, rows));
    std::vector<CsvRow> mins;
    for (const LocalMinimum& m : p.local_minima) mins.push_back({num(m.mu), num(m.nll)});
    run.write("minima.csv", to_csv({"mu", "nll"}, mins));
    out << p.local_minima.size() << " local minima:";
    for (const LocalMinimum& m : p.local_minima) out << "  mu=" << m.mu << " (nll " << m.nll << ")";
    out << "\n";
    return run.finish(kExitOk);
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::string data;
    std::string synthetic;
    std::size_t synthetic_n = 0;
    std::string target;
    bool no_header = false;
    std::vector<std::string> strategies{"no-warmup", "warmup", "warmup-fixed-mean"};
    std::vector<std::string> modes{"equal", "separate"};
    std::optional<std::size_t> outer_folds;
    std::size_t inner_folds = 10;
    std::vector<double> lambda_grid = kDefaultLambdaGrid;
    std::string metric_scale = "original";
    std::size_t threads = 0;
    std::uint64_t seed = 1;
    bool quiet = false;
};

Dataset load_input(const std::string& data, const std::string& synthetic, std::size_t n, std::uint64_t seed,
                   const CsvOptions& csv, RunManifest& m) {
    if (!data.empty() == !synthetic.empty()) throw ConfigError("give exactly one of --data or --synthetic");
    if (!data.empty()) {
        const std::string bytes = read_text_file(data);
        m.inputs.emplace_back(data, sha256_hex(bytes));
        return parse_csv(bytes, csv, fs::path(data).stem().string());
    }
    const SyntheticKind kind = parse_synthetic_kind(synthetic);
    Dataset d = generate({kind, n == 0 ? default_synthetic_size(kind) : n, derive_seed(seed, {0xD3u})});
    m.inputs.emplace_back("synthetic:" + synthetic, sha256_hex(dataset_to_csv(d)));
    return d;
}

int run_bench(const BenchArgs& a, const TrainConfig& base, RunDirectory& run, std::ostream& out, std::ostream& err) {
    CsvOptions csv;
    csv.target = a.target;
    csv.header = !a.no_header;
    const Dataset raw = load_input(a.data, a.synthetic, a.synthetic_n, a.seed, csv, run.manifest());
    const CvPlan plan = make_cv_plan(raw.size(), a.seed, a.outer_folds, a.inner_folds, a.lambda_grid);
    run.manifest().plan = plan;

    NestedCvOptions opts;
    opts.strategies.clear();
    for (const std::string& s : a.strategies) opts.strategies.push_back(parse_strategy(s));
    opts.modes.clear();
    for (const std::string& m : a.modes) opts.modes.push_back(parse_reg_mode(m));
    opts.base = base;
    opts.threads = a.threads;
    if (a.metric_scale == "original") {
        opts.scale = MetricScale::Original;
    } else if (a.metric_scale == "standardized") {
        opts.scale = MetricScale::Standardized;
    } else {
        throw ConfigError("--metric-scale must be 'original' or 'standardized'");
    }
    if (!a.quiet) opts.progress = [&err](const std::string& msg) { err << msg << "\n"; };
    run.manifest().configs.push_back(config_to_text(base));

    const RunSummary summary = nested_cv(raw, plan, opts);

    std::vector<CsvRow> assignment;
    for (std::size_t i = 0; i < plan.outer_assignment.size(); ++i) {
        assignment.push_back({std::to_string(i), std::to_string(plan.outer_assignment[i])});
    }
    run.write("fold_assignment.csv", to_csv({"row", "outer_fold"}, assignment));

    std::vector<CsvRow> folds, cands;
    for (const FoldRecord& r : summary.folds) {
        const std::string s(strategy_name(r.strategy)), m(reg_mode_name(r.mode));
        folds.push_back({std::to_string(r.fold), s, m, num(r.selected.lambda_mean), num(r.selected.lambda_var),
                         num(r.metrics.loglik), num(r.metrics.rmse), r.diverged ? "1" : "0",
                         std::to_string(r.inner_divergences), std::to_string(r.candidates.size()),
                         std::to_string(r.train_rows), std::to_string(r.validation_rows), num(r.train_target_mean),
                         num(r.validation_target_mean)});
        for (std::size_t i = 0; i < r.candidates.size(); ++i) {
            cands.push_back({std::to_string(r.fold), s, m, num(r.candidates[i].lambda_mean),
                             num(r.candidates[i].lambda_var), num(r.candidate_scores[i])});
        }
    }
    run.write("folds.csv", to_csv({"fold", "strategy", "mode", "lambda_mean", "lambda_var", "loglik", "rmse",
                                   "diverged", "inner_divergences", "candidates", "train_rows", "validation_rows",
                                   "train_target_mean", "validation_target_mean"},
                                  folds));
    run.write("inner_candidates.csv",
              to_csv({"fold", "strategy", "mode", "lambda_mean", "lambda_var", "mean_inner_loglik"}, cands));

    std::vector<CsvRow> sel;
    for (const SelectedLambdaRow& r : selected_lambda_report(summary)) {
        sel.push_back({std::to_string(r.fold), std::string(strategy_name(r.strategy)), std::string(reg_mode_name(r.mode)),
                       num(r.lambdas.lambda_mean), num(r.lambdas.lambda_var)});
    }
    run.write("selected_lambdas.csv", to_csv({"fold", "strategy", "mode", "lambda_mean", "lambda_var"}, sel));

    std::vector<CsvRow> tests;
    for (const ModeComparison& c : summary.comparisons) {
        for (const auto& [metric, t] : {std::pair{"loglik", c.loglik}, std::pair{"rmse", c.rmse}}) {
            if (!t) continue;
            tests.push_back({std::string(strategy_name(c.strategy)), metric, num(t->mean_difference),
                             num(t->standard_error), num(t->t_statistic), std::to_string(t->degrees_of_freedom),
                             num(t->critical_value), t->significant ? "1" : "0"});
        }
    }
    run.write("t_tests.csv", to_csv({"strategy", "metric", "mean_difference_equal_minus_separate", "standard_error",
                                     "t", "df", "critical_value", "significant"},
                                    tests));

    ResultsTable table;
    table.add(summary);
    run.write("results.csv", table.to_csv());
    const std::string text = table.render("loglik") + "\n" + table.render("rmse");
    run.write("results_table.txt", text);
    out << text;
    return run.finish(kExitOk);
}

// ---------------------------------------------------------------- oracle

int run_oracle(std::uint64_t seed, RunDirectory& run, std::ostream& out) {
    oracle::OracleSuiteOptions o;
    o.seed = seed;
    const std::vector<oracle::OracleCheck> checks = oracle::run_oracle_suite(o);
    std::vector<CsvRow> rows;
    bool all = true;
    for (const oracle::OracleCheck& c : checks) {
        all = all && c.passed;
        rows.push_back({'"' + c.name + '"', num(c.estimate), num(c.target), num(c.tolerance), c.passed ? "1" : "0",
                        '"' + c.detail + '"'});
        char line[256];
        std::snprintf(line, sizeof line, "%-4s  %-62s estimate %-12.6g target %-12.6g tol %.3g", c.passed ? "PASS" : "FAIL",
                      c.name.c_str(), c.estimate, c.target, c.tolerance);
        out << line << (c.detail.empty() ? "" : "  [" + c.detail + "]") << "\n";
    }
    run.write("oracle.csv", to_csv({"check", "estimate", "target", "tolerance", "passed", "detail"}, rows));
    return run.finish(all ? kExitOk : kExitChecksFailed);
}

// ---------------------------------------------------------------- train

int run_train(const std::string& data, const std::string& synthetic, std::size_t n, const CsvOptions& csv,
              const TrainConfig& cfg, RunDirectory& run, std::ostream& out) {
    const Dataset raw = load_input(data, synthetic, n, cfg.seed, csv, run.manifest());
    run.manifest().configs.push_back(config_to_text(cfg));
    run.write("config.txt", config_to_text(cfg));
    const Standardization s = standardize_fit(raw);
    const Dataset train_data = standardize_apply(s, raw);
    const TrainResult r = train_new(train_data, cfg);
    run.write("network.json", serialize_network(r.net));

    std::vector<CsvRow> sc;
    for (std::size_t c = 0; c < s.x_mean.size(); ++c) {
        sc.push_back({"x" + std::to_string(c + 1), format_exact(s.x_mean[c]), format_exact(s.x_std[c])});
    }
    sc.push_back({"y", format_exact(s.y_mean), format_exact(s.y_std)});
    run.write("standardization.csv", to_csv({"column", "mean", "stddev"}, sc));

    std::vector<CsvRow> trace;
    std::size_t stage = 0;
    for (std::size_t e = 0; e < r.trace.train_loss.size(); ++e) {
        while (stage < r.trace.stage_boundaries.size() && r.trace.stage_boundaries[stage] <= e) ++stage;
        trace.push_back({std::to_string(e + 1), std::to_string(stage), num(r.trace.train_loss[e])});
    }
    run.write("trace.csv", to_csv({"epoch", "stage", "train_loss"}, trace));

    const Metrics m = metrics_on_original_scale(r.net, s, raw);
    run.write("metrics.csv", to_csv({"split", "loglik", "rmse"}, {{"train", num(m.loglik), num(m.rmse)}}));
    out << "trained " << r.trace.train_loss.size() << " epochs; training loglik " << m.loglik << ", RMSE " << m.rmse
        << "\n";
    return run.finish(kExitOk);
}

std::vector<std::string> with_out_dir(std::vector<std::string> args, const std::string& dir) {
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--out") {
            args[i + 1] = dir;
            return args;
        }
    }
    args.push_back("--out");
    args.push_back(dir);
    return args;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mean-variance estimation networks: training strategies, experiments and oracles", "mve"};
    app.require_subcommand(1);
    std::string out_dir;
    std::uint64_t seed = 1;

    // demo
    CLI::App* demo = app.add_subcommand("demo", "Synthetic demonstrations; writes plot-ready CSV files");
    demo->require_subcommand(1);
    CLI::App* sine = demo->add_subcommand("sine", "Sine fits: warm-up vs no warm-up, equal vs separate L2");
    std::vector<std::uint64_t> sine_seeds{1};
    SineDemoSettings sine_settings;
    TrainFlags sine_flags;
    sine->add_option("--seeds", sine_seeds, "Seeds to run")->delimiter(',');
    sine->add_option("--n", sine_settings.n, "Number of points");
    sine->add_option("--lambda", sine_settings.lambda, "L2 constant of the warm-up arm and the separate mean head");
    sine->add_option("--ratio", sine_settings.separate_ratio, "lambda_var / lambda_mean of the separate arm");
    sine_flags.add_to(sine);
    sine->add_option("--out", out_dir, "Run directory")->default_val("runs/demo-sine");

    CLI::App* quad = demo->add_subcommand("quadratic", "Regularization sweep of the variance head on quadratic data");
    std::size_t quad_n = 1000;
    SweepSettings sweep;
    TrainFlags quad_flags;
    quad->add_option("--seed", seed, "Seed");
    quad->add_option("--n", quad_n, "Number of points");
    quad->add_option("--lambda-mean", sweep.lambda_mean, "L2 constant of the mean head");
    quad->add_option("--lambda-vars", sweep.lambda_vars, "L2 constants of the variance head")->delimiter(',');
    quad_flags.add_to(quad);
    quad->add_option("--out", out_dir, "Run directory")->default_val("runs/demo-quadratic");

    CLI::App* land = demo->add_subcommand("landscape", "Profile likelihood of the two-cluster example");
    std::size_t land_n = 100, points = 701;
    double mu_lo = 0.0, mu_hi = 7.0;
    land->add_option("--seed", seed, "Seed");
    land->add_option("--n", land_n, "Points per cluster");
    land->add_option("--mu-min", mu_lo, "Grid start");
    land->add_option("--mu-max", mu_hi, "Grid end");
    land->add_option("--points", points, "Grid size");
    land->add_option("--out", out_dir, "Run directory")->default_val("runs/demo-landscape");

    // bench
    CLI::App* bench = app.add_subcommand("bench", "Nested cross-validation over strategies and regularization modes");
    BenchArgs ba;
    TrainFlags bench_flags;
    bench->add_option("--data", ba.data, "CSV file");
    bench->add_option("--synthetic", ba.synthetic, "Synthetic data set instead of --data: sine, quadratic, two-cluster");
    bench->add_option("--n", ba.synthetic_n, "Size of the synthetic data set");
    bench->add_option("--target", ba.target, "Target column name or 0-based index (default: last)");
    bench->add_flag("--no-header", ba.no_header, "CSV has no header row");
    bench->add_option("--strategies", ba.strategies, "no-warmup, warmup, warmup-fixed-mean")->delimiter(',');
    bench->add_option("--modes", ba.modes, "equal, separate")->delimiter(',');
    bench->add_option("--outer-folds", ba.outer_folds, "Outer folds (default 10, or 5 above 5000 rows)");
    bench->add_option("--inner-folds", ba.inner_folds, "Inner folds");
    bench->add_option("--lambda-grid", ba.lambda_grid, "Candidate L2 constants")->delimiter(',');
    bench->add_option("--metric-scale", ba.metric_scale, "original or standardized");
    bench->add_option("--threads", ba.threads, "Worker threads (0 = all cores)");
    bench->add_option("--seed", ba.seed, "Seed for folds and initializations");
    bench->add_flag("--quiet", ba.quiet, "No progress output");
    bench_flags.add_to(bench);
    bench->add_option("--out", out_dir, "Run directory")->default_val("runs/bench");

    // oracle
    CLI::App* orc = app.add_subcommand("oracle", "Linear-model verification suite");
    std::uint64_t oracle_seed = oracle::OracleSuiteOptions{}.seed;
    orc->add_option("--seed", oracle_seed, "Seed");
    orc->add_option("--out", out_dir, "Run directory")->default_val("runs/oracle");

    // train
    CLI::App* tr = app.add_subcommand("train", "Train one network and serialize it");
    std::string t_data, t_synth, t_config, t_strategy, t_mode;
    std::size_t t_n = 0;
    std::optional<double> t_lm, t_lv;
    std::optional<std::uint64_t> t_seed;
    CsvOptions t_csv;
    bool t_no_header = false;
    TrainFlags t_flags;
    tr->add_option("--data", t_data, "CSV file");
    tr->add_option("--synthetic", t_synth, "Synthetic data set instead of --data");
    tr->add_option("--n", t_n, "Size of the synthetic data set");
    tr->add_option("--target", t_csv.target, "Target column name or 0-based index (default: last)");
    tr->add_flag("--no-header", t_no_header, "CSV has no header row");
    tr->add_option("--config", t_config, "Config file (key = value lines); flags override it");
    tr->add_option("--strategy", t_strategy, "no-warmup, warmup or warmup-fixed-mean");
    tr->add_option("--mode", t_mode, "equal or separate");
    tr->add_option("--lambda-mean", t_lm, "L2 constant of the mean head");
    tr->add_option("--lambda-var", t_lv, "L2 constant of the variance head");
    tr->add_option("--seed", t_seed, "Seed");
    t_flags.add_to(tr);
    tr->add_option("--out", out_dir, "Run directory")->default_val("runs/train");

    // replay
    CLI::App* rep = app.add_subcommand("replay", "Rerun the command recorded in a manifest");
    std::string manifest_path;
    rep->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
    rep->add_option("--out", out_dir, "Run directory for the rerun")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*demo) {
            if (*sine) {
                sine_flags.apply(sine_settings.base);
                RunDirectory run(out_dir, "demo sine", args, sine_seeds.empty() ? 0 : sine_seeds.front());
                return run_demo_sine(sine_seeds, sine_settings, run, out);
            }
            if (*quad) {
                quad_flags.apply(sweep.base);
                RunDirectory run(out_dir, "demo quadratic", args, seed);
                return run_demo_quadratic(seed, quad_n, sweep, run, out);
            }
            RunDirectory run(out_dir, "demo landscape", args, seed);
            return run_demo_landscape(seed, land_n, mu_lo, mu_hi, points, run, out);
        }
        if (*bench) {
            TrainConfig base;
            bench_flags.apply(base);
            base.validate();
            RunDirectory run(out_dir, "bench", args, ba.seed);
            return run_bench(ba, base, run, out, err);
        }
        if (*orc) {
            RunDirectory run(out_dir, "oracle", args, oracle_seed);
            return run_oracle(oracle_seed, run, out);
        }
        if (*tr) {
            TrainConfig cfg = t_config.empty() ? TrainConfig{} : config_from_text(read_text_file(t_config));
            if (!t_strategy.empty()) cfg.strategy = parse_strategy(t_strategy);
            if (t_lm) cfg.lambda_mean = *t_lm;
            if (t_lv) cfg.lambda_var = *t_lv;
            if (!t_mode.empty()) {
                cfg.reg_mode = parse_reg_mode(t_mode);
            } else if (t_lm || t_lv) {
                cfg.reg_mode = cfg.lambda_mean == cfg.lambda_var ? RegMode::Equal : RegMode::Separate;
            }
            if (t_seed) cfg.seed = *t_seed;
            t_flags.apply(cfg);
            cfg.validate();
            t_csv.header = !t_no_header;
            RunDirectory run(out_dir, "train", args, cfg.seed);
            return run_train(t_data, t_synth, t_n, t_csv, cfg, run, out);
        }
        if (*rep) {
            const RunManifest m = RunManifest::from_json(read_text_file(manifest_path));
            for (const auto& [name, sum] : m.inputs) {
                if (name.rfind("synthetic:", 0) == 0) continue;
                if (sha256_hex(read_text_file(name)) != sum) throw DataError(name + ": input changed since the run");
            }
            return cli_dispatch(with_out_dir(m.argv, out_dir), out, err);
        }
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    }
    err << app.help();
    return kExitUsage;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace mve
