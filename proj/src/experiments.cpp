#include "mve/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "mve/errors.hpp"
#include "mve/rng.hpp"

namespace mve {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------- generators

std::string_view synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::Sine: return "sine";
        case SyntheticKind::QuadraticHetero: return "quadratic";
        case SyntheticKind::TwoCluster: return "two-cluster";
    }
    return "unknown";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
    for (SyntheticKind k : {SyntheticKind::Sine, SyntheticKind::QuadraticHetero, SyntheticKind::TwoCluster}) {
        if (name == synthetic_kind_name(k)) return k;
    }
    throw ConfigError("unknown synthetic data set '" + std::string(name) + "'");
}

std::size_t default_synthetic_size(SyntheticKind kind) { return kind == SyntheticKind::TwoCluster ? 100 : 1000; }

double sine_mean(double x) { return 0.4 * std::sin(2.0 * std::numbers::pi * x); }
double sine_stddev(double) { return 0.01; }
double quadratic_mean(double x) { return x * x; }
double quadratic_stddev(double x) { return 0.1 + 0.2 * x * x; }

Dataset generate(const SyntheticSpec& spec) {
    if (spec.n == 0) throw ConfigError("synthetic data set needs n > 0");
    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.label = std::string(synthetic_kind_name(spec.kind));
    switch (spec.kind) {
        case SyntheticKind::Sine: {
            std::uniform_real_distribution<double> ux(0.0, 10.0);
            d.X = Matrix(spec.n, 1);
            d.y.resize(spec.n);
            for (std::size_t i = 0; i < spec.n; ++i) {
                const double x = ux(rng);
                d.X(i, 0) = x;
                d.y[i] = sine_mean(x) + sine_stddev(x) * normal(rng);
            }
            break;
        }
        case SyntheticKind::QuadraticHetero: {
            std::uniform_real_distribution<double> ux(-1.0, 1.0);
            d.X = Matrix(spec.n, 1);
            d.y.resize(spec.n);
            for (std::size_t i = 0; i < spec.n; ++i) {
                const double x = ux(rng);
                d.X(i, 0) = x;
                d.y[i] = quadratic_mean(x) + quadratic_stddev(x) * normal(rng);
            }
            break;
        }
        case SyntheticKind::TwoCluster: {
            d.X = Matrix(2 * spec.n, 1, 1.0);
            d.y.resize(2 * spec.n);
            for (std::size_t i = 0; i < spec.n; ++i) d.y[i] = 2.0 + 0.5 * normal(rng);
            for (std::size_t i = 0; i < spec.n; ++i) d.y[spec.n + i] = 5.0 + 0.1 * normal(rng);
            break;
        }
    }
    return d;
}

std::vector<std::size_t> two_cluster_labels(const Dataset& d) {
    if (d.size() % 2 != 0) throw DataError("two-cluster data must have an even number of rows");
    std::vector<std::size_t> labels(d.size(), 0);
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), labels.end(), 1);
    return labels;
}

// ---------------------------------------------------------------- landscape

std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return out;
}

namespace {

std::size_t cluster_count(std::span<const std::size_t> cluster) {
    return cluster.empty() ? 0 : *std::max_element(cluster.begin(), cluster.end()) + 1;
}

std::vector<double> cluster_mle_variances(std::span<const double> y, std::span<const std::size_t> cluster, double mu) {
    const std::size_t k = cluster_count(cluster);
    std::vector<double> ss(k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - mu;
        ss[cluster[i]] += r * r;
        ++counts[cluster[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) throw DataError("empty cluster in landscape data");
        ss[c] /= static_cast<double>(counts[c]);
    }
    return ss;
}

void check_cluster_input(std::span<const double> y, std::span<const std::size_t> cluster) {
    if (y.empty()) throw DataError("landscape data is empty");
    if (y.size() != cluster.size()) throw ConfigError("cluster labels do not match the targets");
}

}  // namespace

double brute_force_profile_nll(std::span<const double> y, std::span<const std::size_t> cluster, double mu) {
    check_cluster_input(y, cluster);
    const std::vector<double> var = cluster_mle_variances(y, cluster, mu);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = var[cluster[i]];
        const double r = y[i] - mu;
        total += 0.5 * std::log(v) + 0.5 * r * r / v;
    }
    return total;
}

std::vector<LocalMinimum> find_local_minima(std::span<const double> grid, std::span<const double> values) {
    if (grid.size() != values.size()) throw ConfigError("grid and values differ in length");
    std::vector<LocalMinimum> minima;
    for (std::size_t i = 1; i + 1 < values.size(); ++i) {
        if (values[i] < values[i - 1] && values[i] < values[i + 1]) minima.push_back({i, grid[i], values[i]});
    }
    return minima;
}

LandscapeProfile nll_profile(std::span<const double> y, std::span<const std::size_t> cluster,
                             std::span<const double> mu_grid) {
    if (mu_grid.empty()) throw ConfigError("nll_profile needs a nonempty grid");
    check_cluster_input(y, cluster);
    const std::size_t k = cluster_count(cluster);
    std::vector<double> counts(k, 0.0);
    for (std::size_t c : cluster) counts[c] += 1.0;

    LandscapeProfile p;
    p.mu_grid.assign(mu_grid.begin(), mu_grid.end());
    p.nll_values.reserve(mu_grid.size());
    for (double mu : mu_grid) {
        const std::vector<double> var = cluster_mle_variances(y, cluster, mu);
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) total += 0.5 * counts[c] * (std::log(var[c]) + 1.0);
        p.nll_values.push_back(total);
    }
    p.local_minima = find_local_minima(p.mu_grid, p.nll_values);
    return p;
}

LandscapeProfile nll_profile(const Dataset& two_cluster, std::span<const double> mu_grid) {
    const std::vector<std::size_t> labels = two_cluster_labels(two_cluster);
    return nll_profile(two_cluster.y, labels, mu_grid);
}

// ---------------------------------------------------------------- curve fits

double CurveFit::variance_ratio() const {
    if (stddev.empty()) return kNaN;
    const auto [lo, hi] = std::minmax_element(stddev.begin(), stddev.end());
    return (*hi * *hi) / (*lo * *lo);
}

double CurveFit::stddev_at(double at) const {
    if (x.empty()) return kNaN;
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (std::abs(x[i] - at) < std::abs(x[best] - at)) best = i;
    }
    return stddev[best];
}

CurveFit tabulate_fit(const MveNetwork& net, const Standardization& s, std::span<const double> grid,
                      const std::function<double(double)>& true_mean,
                      const std::function<double(double)>& true_stddev) {
    if (net.input_size() != 1 || s.x_mean.size() != 1) throw ConfigError("tabulate_fit expects one covariate");
    CurveFit f;
    f.x.assign(grid.begin(), grid.end());
    MveWorkspace ws;
    double se = 0.0;
    for (double xv : grid) {
        const double xs = (xv - s.x_mean[0]) / s.x_std[0];
        const Prediction p = predict(net, std::span<const double>(&xs, 1), ws);
        const double m = p.mean * s.y_std + s.y_mean;
        const double sd = std::sqrt(p.variance) * s.y_std;
        const double tm = true_mean(xv);
        f.mean.push_back(m);
        f.stddev.push_back(sd);
        f.true_mean.push_back(tm);
        f.true_stddev.push_back(true_stddev(xv));
        se += (m - tm) * (m - tm);
    }
    f.mean_rmse = grid.empty() ? kNaN : std::sqrt(se / static_cast<double>(grid.size()));
    return f;
}

// ---------------------------------------------------------------- sine demo

std::string_view sine_arm_name(SineArm a) {
    switch (a) {
        case SineArm::Warmup: return "warmup";
        case SineArm::NoWarmupEqual: return "no-warmup-equal";
        case SineArm::NoWarmupSeparate: return "no-warmup-separate";
    }
    return "unknown";
}

namespace {

CurveFit diverged_fit() {
    CurveFit f;
    f.mean_rmse = std::numeric_limits<double>::infinity();
    return f;
}

}  // namespace

SineArmResult run_sine_arm(const Dataset& raw, SineArm arm, std::uint64_t seed, const SineDemoSettings& settings) {
    SineArmResult result;
    result.arm = arm;
    TrainConfig cfg = settings.base;
    cfg.seed = seed;
    switch (arm) {
        case SineArm::Warmup:
            cfg.strategy = Strategy::Warmup;
            cfg.reg_mode = RegMode::Equal;
            cfg.lambda_mean = cfg.lambda_var = settings.lambda;
            break;
        case SineArm::NoWarmupSeparate:
            cfg.strategy = Strategy::NoWarmup;
            cfg.reg_mode = RegMode::Separate;
            cfg.lambda_mean = settings.lambda;
            cfg.lambda_var = settings.lambda * settings.separate_ratio;
            break;
        case SineArm::NoWarmupEqual: {
            cfg.strategy = Strategy::NoWarmup;
            cfg.reg_mode = RegMode::Equal;
            // Hold-out selection of the shared lambda.
            std::vector<std::size_t> order(raw.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(derive_seed(seed, {0x7u}));
            std::shuffle(order.begin(), order.end(), rng);
            const auto n_hold = static_cast<std::size_t>(std::round(settings.selection_holdout * raw.size()));
            if (n_hold == 0 || n_hold >= raw.size()) throw ConfigError("selection hold-out leaves an empty split");
            const std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
            const std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
            const Dataset fit_raw = subset(raw, fit);
            const Dataset hold_raw = subset(raw, hold);
            const Standardization s = standardize_fit(fit_raw);
            const Dataset fit_std = standardize_apply(s, fit_raw);
            std::vector<LambdaPair> cands;
            std::vector<double> scores;
            for (double l : settings.lambda_grid) {
                TrainConfig c = cfg;
                c.lambda_mean = c.lambda_var = l;
                double score = kNegInf;
                try {
                    const TrainResult r = train_new(fit_std, c);
                    score = metrics_on_original_scale(r.net, s, hold_raw).loglik;
                    if (std::isnan(score)) score = kNegInf;
                } catch (const DivergenceError&) {
                }
                cands.push_back({l, l});
                scores.push_back(score);
                result.selection_scores.emplace_back(l, score);
            }
            const LambdaPair chosen = cands[select_candidate(cands, scores)];
            cfg.lambda_mean = chosen.lambda_mean;
            cfg.lambda_var = chosen.lambda_var;
            break;
        }
    }
    result.config = cfg;
    const Standardization s = standardize_fit(raw);
    const Dataset data = standardize_apply(s, raw);
    try {
        const TrainResult r = train_new(data, cfg);
        const std::vector<double> grid = linspace(0.0, 10.0, settings.grid_points);
        result.fit = tabulate_fit(r.net, s, grid, sine_mean, sine_stddev);
    } catch (const DivergenceError&) {
        result.diverged = true;
        result.fit = diverged_fit();
    }
    return result;
}

// ---------------------------------------------------------------- quadratic sweep

std::vector<SweepPanel> regularization_sweep(const Dataset& raw, std::uint64_t seed, const SweepSettings& settings) {
    const Standardization s = standardize_fit(raw);
    const Dataset data = standardize_apply(s, raw);
    const std::vector<double> grid = linspace(-1.0, 1.0, settings.grid_points);
    std::vector<SweepPanel> panels;
    for (double lv : settings.lambda_vars) {
        SweepPanel panel;
        panel.lambda_var = lv;
        TrainConfig cfg = settings.base;
        cfg.seed = seed;
        cfg.lambda_mean = settings.lambda_mean;
        cfg.lambda_var = lv;
        cfg.reg_mode = cfg.lambda_mean == cfg.lambda_var ? cfg.reg_mode : RegMode::Separate;
        panel.config = cfg;
        try {
            const TrainResult r = train_new(data, cfg);
            panel.fit = tabulate_fit(r.net, s, grid, quadratic_mean, quadratic_stddev);
        } catch (const DivergenceError&) {
            panel.diverged = true;
            panel.fit = diverged_fit();
        }
        panels.push_back(std::move(panel));
    }
    return panels;
}

// ---------------------------------------------------------------- folds

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("need at least 2 folds");
    if (k > n) throw ConfigError("fold count " + std::to_string(k) + " exceeds " + std::to_string(n) + " rows");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold(n);
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) fold[order[pos++]] = f;
    }
    return fold;
}

CvPlan make_cv_plan(std::size_t n, std::uint64_t seed, std::optional<std::size_t> outer_folds, std::size_t inner_folds,
                    std::vector<double> lambda_grid) {
    CvPlan plan;
    plan.outer_folds = outer_folds.value_or(n > kLargeDatasetRows ? 5 : 10);
    plan.inner_folds = inner_folds;
    plan.lambda_grid = std::move(lambda_grid);
    plan.seed = seed;
    plan.outer_assignment = assign_folds(n, plan.outer_folds, derive_seed(seed, {0xF0u}));
    plan.validate();
    return plan;
}

std::vector<std::size_t> CvPlan::validation_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < outer_assignment.size(); ++i) {
        if (outer_assignment[i] == fold) rows.push_back(i);
    }
    return rows;
}

std::vector<std::size_t> CvPlan::training_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < outer_assignment.size(); ++i) {
        if (outer_assignment[i] != fold) rows.push_back(i);
    }
    return rows;
}

std::vector<std::size_t> CvPlan::inner_assignment(std::size_t fold) const {
    return assign_folds(training_rows(fold).size(), inner_folds, derive_seed(seed, {0xF1u, fold}));
}

void CvPlan::validate() const {
    if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
    for (double l : lambda_grid) {
        if (!(l >= 0.0)) throw ConfigError("lambda grid values must be nonnegative");
    }
    const std::size_t n = outer_assignment.size();
    if (outer_folds < 2 || outer_folds > n) {
        throw ConfigError("outer fold count " + std::to_string(outer_folds) + " invalid for " + std::to_string(n) +
                          " rows");
    }
    for (std::size_t f : outer_assignment) {
        if (f >= outer_folds) throw ConfigError("fold assignment out of range");
    }
    for (std::size_t f = 0; f < outer_folds; ++f) {
        const std::size_t train = n - validation_rows(f).size();
        if (inner_folds < 2 || inner_folds > train) {
            throw ConfigError("inner fold count " + std::to_string(inner_folds) + " invalid for an outer training split of " +
                              std::to_string(train) + " rows");
        }
        // Each inner training split needs two rows for a sample stdev.
        if (train - (train + inner_folds - 1) / inner_folds < 2) {
            throw ConfigError("outer training split too small for inner cross-validation");
        }
    }
}

std::vector<LambdaPair> candidate_lambdas(RegMode mode, std::span<const double> grid) {
    std::vector<LambdaPair> out;
    if (mode == RegMode::Equal) {
        for (double l : grid) out.push_back({l, l});
    } else {
        for (double lm : grid) {
            for (double lv : grid) out.push_back({lm, lv});
        }
    }
    return out;
}

std::size_t select_candidate(std::span<const LambdaPair> candidates, std::span<const double> scores) {
    if (candidates.empty() || candidates.size() != scores.size()) throw ConfigError("bad candidate list");
    auto larger = [](const LambdaPair& a, const LambdaPair& b) {
        if (a.lambda_var != b.lambda_var) return a.lambda_var > b.lambda_var;
        return a.lambda_mean > b.lambda_mean;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double s = std::isnan(scores[i]) ? kNegInf : scores[i];
        const double b = std::isnan(scores[best]) ? kNegInf : scores[best];
        if (s > b || (s == b && larger(candidates[i], candidates[best]))) best = i;
    }
    return best;
}

// ---------------------------------------------------------------- nested CV

const ArmSummary* RunSummary::arm(Strategy s, RegMode m) const {
    for (const ArmSummary& a : arms) {
        if (a.strategy == s && a.mode == m) return &a;
    }
    return nullptr;
}

namespace {

struct PreparedSplit {
    Standardization scaler;
    Dataset train;    // standardized
    Dataset val_raw;  // original units
    double train_target_mean = 0.0;
    double validation_target_mean = 0.0;
};

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

PreparedSplit prepare_split(const Dataset& raw, std::span<const std::size_t> train_rows,
                            std::span<const std::size_t> val_rows) {
    PreparedSplit p;
    const Dataset train_raw = subset(raw, train_rows);
    p.scaler = standardize_fit(train_raw);
    p.train = standardize_apply(p.scaler, train_raw);
    p.val_raw = subset(raw, val_rows);
    p.train_target_mean = mean_of(p.train.y);
    double acc = 0.0;
    for (double y : p.val_raw.y) acc += (y - p.scaler.y_mean) / p.scaler.y_std;
    p.validation_target_mean = p.val_raw.y.empty() ? 0.0 : acc / static_cast<double>(p.val_raw.y.size());
    return p;
}

struct Job {
    Strategy strategy;
    LambdaPair lambdas;
};

struct JobOutcome {
    bool diverged = false;
    Metrics metrics;
};

TrainConfig job_config(const TrainConfig& base, Strategy s, const LambdaPair& l, std::uint64_t seed) {
    TrainConfig c = base;
    c.strategy = s;
    c.lambda_mean = l.lambda_mean;
    c.lambda_var = l.lambda_var;
    c.reg_mode = l.lambda_mean == l.lambda_var ? RegMode::Equal : RegMode::Separate;
    c.seed = seed;
    return c;
}

// Trains every job on one split from a shared initial network. Warm-up stages
// depend only on lambda_mean and are cached across jobs.
std::vector<JobOutcome> run_split_jobs(const PreparedSplit& split, const TrainConfig& base, std::uint64_t seed,
                                       std::span<const Job> jobs, MetricScale scale) {
    const MveNetwork init = initial_network(split.train.features(), job_config(base, Strategy::NoWarmup, {}, seed));
    std::map<double, std::optional<MveNetwork>> warm;
    std::vector<JobOutcome> out(jobs.size());
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const TrainConfig cfg = job_config(base, jobs[j].strategy, jobs[j].lambdas, seed);
        try {
            MveNetwork net = init;
            TrainTrace trace;
            if (cfg.strategy == Strategy::NoWarmup) {
                train_stage(net, split.train, cfg, 1, trace);
            } else {
                auto it = warm.find(cfg.lambda_mean);
                if (it == warm.end()) {
                    std::optional<MveNetwork> stage1;
                    try {
                        MveNetwork w = init;
                        TrainTrace t;
                        train_stage(w, split.train, job_config(base, Strategy::Warmup, {cfg.lambda_mean, cfg.lambda_mean}, seed),
                                    1, t);
                        stage1 = std::move(w);
                    } catch (const DivergenceError&) {
                    }
                    it = warm.emplace(cfg.lambda_mean, std::move(stage1)).first;
                }
                if (!it->second) throw DivergenceError("warm-up stage diverged");
                net = *it->second;
                train_stage(net, split.train, cfg, 2, trace);
            }
            out[j].metrics = evaluate(net, split.scaler, split.val_raw, scale);
        } catch (const DivergenceError&) {
            out[j].diverged = true;
            out[j].metrics = {kNaN, kNaN};
        }
    }
    return out;
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::vector<Job> jobs_for(std::span<const Strategy> strategies, std::span<const RegMode> modes,
                          std::span<const double> grid) {
    std::vector<LambdaPair> pairs;
    for (RegMode m : modes) {
        for (const LambdaPair& l : candidate_lambdas(m, grid)) {
            if (std::find(pairs.begin(), pairs.end(), l) == pairs.end()) pairs.push_back(l);
        }
    }
    std::vector<Job> jobs;
    for (Strategy s : strategies) {
        for (const LambdaPair& l : pairs) jobs.push_back({s, l});
    }
    return jobs;
}

std::size_t job_index(std::span<const Job> jobs, Strategy s, const LambdaPair& l) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].strategy == s && jobs[i].lambdas == l) return i;
    }
    throw UsageError("job not scheduled");
}

}  // namespace

RunSummary nested_cv(const Dataset& raw, const CvPlan& plan, const NestedCvOptions& options) {
    plan.validate();
    if (plan.outer_assignment.size() != raw.size()) throw ConfigError("plan does not match the data set size");
    if (options.strategies.empty() || options.modes.empty()) throw ConfigError("no strategies or modes selected");
    options.base.validate();

    RunSummary summary;
    summary.dataset_label = raw.label;
    summary.plan = plan;
    summary.base = options.base;
    summary.scale = options.scale;
    summary.strategies = options.strategies;
    summary.modes = options.modes;

    std::mutex progress_mutex;
    auto report = [&](const std::string& msg) {
        if (!options.progress) return;
        std::lock_guard lock(progress_mutex);
        options.progress(msg);
    };

    const std::size_t K = plan.outer_folds;
    const std::size_t J = plan.inner_folds;
    const std::vector<Job> inner_jobs = jobs_for(options.strategies, options.modes, plan.lambda_grid);

    // Phase 1: every inner split of every outer fold.
    std::vector<std::vector<JobOutcome>> inner(K * J);
    parallel_for(K * J, options.threads, [&](std::size_t unit) {
        const std::size_t f = unit / J;
        const std::size_t j = unit % J;
        const std::vector<std::size_t> outer_train = plan.training_rows(f);
        const std::vector<std::size_t> inner_fold = plan.inner_assignment(f);
        std::vector<std::size_t> tr, va;
        for (std::size_t i = 0; i < outer_train.size(); ++i) (inner_fold[i] == j ? va : tr).push_back(outer_train[i]);
        const PreparedSplit split = prepare_split(raw, tr, va);
        inner[unit] = run_split_jobs(split, options.base, derive_seed(plan.seed, {0x10u, f, j + 1}), inner_jobs,
                                     options.scale);
        report("outer fold " + std::to_string(f + 1) + "/" + std::to_string(K) + ", inner fold " +
               std::to_string(j + 1) + "/" + std::to_string(J) + " done");
    });

    // Selection per (fold, strategy, mode).
    std::vector<FoldRecord> records;
    for (std::size_t f = 0; f < K; ++f) {
        for (Strategy s : options.strategies) {
            for (RegMode m : options.modes) {
                FoldRecord rec;
                rec.fold = f;
                rec.strategy = s;
                rec.mode = m;
                rec.candidates = candidate_lambdas(m, plan.lambda_grid);
                for (const LambdaPair& l : rec.candidates) {
                    const std::size_t idx = job_index(inner_jobs, s, l);
                    double total = 0.0;
                    bool bad = false;
                    for (std::size_t j = 0; j < J; ++j) {
                        const JobOutcome& o = inner[f * J + j][idx];
                        if (o.diverged || !std::isfinite(o.metrics.loglik)) {
                            bad = true;
                            if (o.diverged) ++rec.inner_divergences;
                        } else {
                            total += o.metrics.loglik;
                        }
                    }
                    rec.candidate_scores.push_back(bad ? kNegInf : total / static_cast<double>(J));
                }
                rec.selected = rec.candidates[select_candidate(rec.candidates, rec.candidate_scores)];
                records.push_back(std::move(rec));
            }
        }
    }

    // Phase 2: final models on each outer training split.
    const std::size_t arms_per_fold = options.strategies.size() * options.modes.size();
    parallel_for(K, options.threads, [&](std::size_t f) {
        const PreparedSplit split = prepare_split(raw, plan.training_rows(f), plan.validation_rows(f));
        std::vector<Job> jobs;
        for (std::size_t a = 0; a < arms_per_fold; ++a) {
            const FoldRecord& rec = records[f * arms_per_fold + a];
            const Job job{rec.strategy, rec.selected};
            if (std::none_of(jobs.begin(), jobs.end(),
                             [&](const Job& x) { return x.strategy == job.strategy && x.lambdas == job.lambdas; })) {
                jobs.push_back(job);
            }
        }
        const std::vector<JobOutcome> outcomes =
            run_split_jobs(split, options.base, derive_seed(plan.seed, {0x10u, f, 0}), jobs, options.scale);
        for (std::size_t a = 0; a < arms_per_fold; ++a) {
            FoldRecord& rec = records[f * arms_per_fold + a];
            const JobOutcome& o = outcomes[job_index(jobs, rec.strategy, rec.selected)];
            rec.diverged = o.diverged;
            rec.metrics = o.metrics;
            rec.train_rows = split.train.size();
            rec.validation_rows = split.val_raw.size();
            rec.train_target_mean = split.train_target_mean;
            rec.validation_target_mean = split.validation_target_mean;
        }
        report("outer fold " + std::to_string(f + 1) + "/" + std::to_string(K) + " final models done");
    });
    summary.folds = std::move(records);

    for (Strategy s : options.strategies) {
        for (RegMode m : options.modes) {
            ArmSummary arm;
            arm.strategy = s;
            arm.mode = m;
            std::vector<Metrics> ok;
            for (const FoldRecord& r : summary.folds) {
                if (r.strategy != s || r.mode != m) continue;
                arm.folds.push_back(r.metrics);
                if (r.diverged) {
                    ++arm.diverged_folds;
                } else {
                    ok.push_back(r.metrics);
                }
            }
            if (ok.size() >= 2) arm.aggregate = aggregate_folds(ok);
            summary.arms.push_back(std::move(arm));
        }
    }

    const bool both_modes = std::find(options.modes.begin(), options.modes.end(), RegMode::Equal) != options.modes.end() &&
                            std::find(options.modes.begin(), options.modes.end(), RegMode::Separate) != options.modes.end();
    if (both_modes) {
        for (Strategy s : options.strategies) {
            ModeComparison cmp;
            cmp.strategy = s;
            const ArmSummary* eq = summary.arm(s, RegMode::Equal);
            const ArmSummary* sep = summary.arm(s, RegMode::Separate);
            std::vector<double> ll_a, ll_b, rm_a, rm_b;
            for (std::size_t f = 0; f < K; ++f) {
                const Metrics& a = eq->folds[f];
                const Metrics& b = sep->folds[f];
                if (!std::isfinite(a.loglik) || !std::isfinite(b.loglik)) continue;
                ll_a.push_back(a.loglik);
                ll_b.push_back(b.loglik);
                rm_a.push_back(a.rmse);
                rm_b.push_back(b.rmse);
            }
            if (ll_a.size() >= 2) {
                cmp.loglik = paired_t_test(ll_a, ll_b, options.confidence);
                cmp.rmse = paired_t_test(rm_a, rm_b, options.confidence);
            }
            summary.comparisons.push_back(cmp);
        }
    }
    return summary;
}

std::vector<SelectedLambdaRow> selected_lambda_report(const RunSummary& summary) {
    std::vector<SelectedLambdaRow> rows;
    for (const FoldRecord& r : summary.folds) rows.push_back({r.fold, r.strategy, r.mode, r.selected});
    return rows;
}

}  // namespace mve
