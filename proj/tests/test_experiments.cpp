#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mve/errors.hpp"
#include "mve/experiments.hpp"

using namespace mve;

namespace {

double sample_sd(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (v.size() - 1));
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

TrainConfig tiny_base() {
    TrainConfig c;
    c.epochs_per_stage = 3;
    c.batch_size = 16;
    c.arch.hidden = {4};
    return c;
}

}  // namespace

TEST_CASE("generators") {
    SUBCASE("sine noise level") {
        const Dataset d = generate({SyntheticKind::Sine, 1000, 1});
        REQUIRE(d.size() == 1000);
        std::vector<double> r;
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(d.X(i, 0) >= 0.0);
            CHECK(d.X(i, 0) <= 10.0);
            r.push_back(d.y[i] - 0.4 * std::sin(2 * M_PI * d.X(i, 0)));
        }
        const double sd = sample_sd(r);
        CHECK(sd >= 0.008);
        CHECK(sd <= 0.012);
    }
    SUBCASE("quadratic noise profile by binning 100k samples") {
        const Dataset d = generate({SyntheticKind::QuadraticHetero, 100000, 2});
        std::vector<double> centre, edge;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double x = d.X(i, 0);
            const double r = d.y[i] - x * x;
            if (std::abs(x) < 0.02) centre.push_back(r);
            if (std::abs(x) > 0.98) edge.push_back(r);
        }
        CHECK(sample_sd(centre) == doctest::Approx(0.1).epsilon(0.05));
        CHECK(sample_sd(edge) == doctest::Approx(0.3).epsilon(0.05));
    }
    SUBCASE("two clusters") {
        const Dataset d = generate({SyntheticKind::TwoCluster, 100, 3});
        REQUIRE(d.size() == 200);
        const auto labels = two_cluster_labels(d);
        std::vector<double> a, b;
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(d.X(i, 0) == 1.0);
            (labels[i] == 0 ? a : b).push_back(d.y[i]);
        }
        CHECK(a.size() == 100);
        CHECK(b.size() == 100);
        CHECK(mean_of(a) == doctest::Approx(2.0).epsilon(0.1));
        CHECK(mean_of(b) == doctest::Approx(5.0).epsilon(0.01));
    }
    CHECK_THROWS_AS(generate({SyntheticKind::Sine, 0, 0}), ConfigError);
    CHECK(generate({SyntheticKind::Sine, 10, 5}).y == generate({SyntheticKind::Sine, 10, 5}).y);
    for (SyntheticKind k : {SyntheticKind::Sine, SyntheticKind::QuadraticHetero, SyntheticKind::TwoCluster})
        CHECK(parse_synthetic_kind(synthetic_kind_name(k)) == k);
}

TEST_CASE("likelihood landscape of the two-cluster data") {
    const Dataset d = generate({SyntheticKind::TwoCluster, 100, 11});
    const auto grid = linspace(0.0, 7.0, 701);
    const LandscapeProfile p = nll_profile(d, grid);
    REQUIRE(p.local_minima.size() == 2);
    CHECK(p.local_minima[0].mu > 1.5);
    CHECK(p.local_minima[0].mu < 2.5);
    CHECK(p.local_minima[1].mu > 4.5);
    CHECK(p.local_minima[1].mu < 5.5);
    const auto labels = two_cluster_labels(d);
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(std::abs(p.nll_values[i] - brute_force_profile_nll(d.y, labels, grid[i])) <= 1e-10);

    // Per-cluster MLE variance of the wide cluster at mu = 2 is ~0.25.
    double ss = 0.0;
    for (std::size_t i = 0; i < 100; ++i) ss += (d.y[i] - 2.0) * (d.y[i] - 2.0);
    CHECK(ss / 100 == doctest::Approx(0.25).epsilon(0.3));

    CHECK_THROWS_AS(nll_profile(d, std::vector<double>{}), ConfigError);
}

TEST_CASE("find_local_minima excludes end points and plateaus") {
    const std::vector<double> g = {0, 1, 2, 3, 4, 5, 6};
    const std::vector<double> v = {0, 2, 1, 3, 3, 2, -1};
    const auto m = find_local_minima(g, v);
    REQUIRE(m.size() == 1);
    CHECK(m[0].index == 2);
    CHECK(linspace(1.0, 2.0, 5) == std::vector<double>{1.0, 1.25, 1.5, 1.75, 2.0});
}

TEST_CASE("fold assignment") {
    const auto f = assign_folds(23, 5, 9);
    REQUIRE(f.size() == 23);
    std::vector<std::size_t> counts(5, 0);
    for (std::size_t id : f) ++counts.at(id);
    for (std::size_t c : counts) CHECK((c == 4 || c == 5));
    CHECK(assign_folds(23, 5, 9) == f);
    CHECK(assign_folds(23, 5, 10) != f);
    CHECK_THROWS_AS(assign_folds(3, 5, 0), ConfigError);
    CHECK_THROWS_AS(assign_folds(10, 1, 0), ConfigError);

    const CvPlan plan = make_cv_plan(100, 4);
    CHECK(plan.outer_folds == 10);
    CHECK(make_cv_plan(6000, 4).outer_folds == 5);
    std::vector<std::size_t> seen;
    for (std::size_t k = 0; k < plan.outer_folds; ++k) {
        const auto v = plan.validation_rows(k), t = plan.training_rows(k);
        CHECK(v.size() + t.size() == 100);
        std::vector<std::size_t> all = v;
        all.insert(all.end(), t.begin(), t.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < 100; ++i) CHECK(all[i] == i);
        seen.insert(seen.end(), v.begin(), v.end());
        CHECK(plan.inner_assignment(k).size() == t.size());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen.size() == 100);
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("candidate grids and selection") {
    CHECK(candidate_lambdas(RegMode::Equal, kDefaultLambdaGrid).size() == 5);
    CHECK(candidate_lambdas(RegMode::Separate, kDefaultLambdaGrid).size() == 25);
    for (const LambdaPair& p : candidate_lambdas(RegMode::Equal, kDefaultLambdaGrid)) CHECK(p.lambda_mean == p.lambda_var);

    const std::vector<LambdaPair> eq = {{0.1, 0.1}, {0.01, 0.01}, {1.0, 1.0}};
    CHECK(select_candidate(eq, std::vector<double>{-1.0, -0.5, -2.0}) == 1);
    // Ties go to the larger constant.
    CHECK(select_candidate(eq, std::vector<double>{-1.0, -1.0, -2.0}) == 0);
    const double ninf = -std::numeric_limits<double>::infinity();
    CHECK(select_candidate(eq, std::vector<double>{ninf, -3.0, ninf}) == 1);
    const std::vector<LambdaPair> sep = {{0.1, 0.01}, {0.01, 0.1}};
    CHECK(select_candidate(sep, std::vector<double>{-1.0, -1.0}) == 1);
    CHECK_THROWS_AS(select_candidate(eq, std::vector<double>{-1.0}), ConfigError);
}

TEST_CASE("nested cross-validation integrity") {
    const Dataset raw = generate({SyntheticKind::QuadraticHetero, 45, 21});
    const CvPlan plan = make_cv_plan(raw.size(), 3, 3, 3, {1e-3, 1e-1});
    NestedCvOptions opt;
    opt.base = tiny_base();
    opt.threads = 1;
    const RunSummary s = nested_cv(raw, plan, opt);

    REQUIRE(s.folds.size() == 3 * 3 * 2);
    for (const FoldRecord& r : s.folds) {
        CHECK(r.candidates.size() == (r.mode == RegMode::Equal ? 2u : 4u));
        CHECK(r.candidate_scores.size() == r.candidates.size());
        CHECK(r.train_rows == plan.training_rows(r.fold).size());
        CHECK(r.validation_rows == plan.validation_rows(r.fold).size());
        CHECK(std::abs(r.train_target_mean) < 1e-12);
        CHECK(std::abs(r.validation_target_mean) > 1e-6);
        if (r.mode == RegMode::Equal) CHECK(r.selected.lambda_mean == r.selected.lambda_var);
    }
    REQUIRE(s.arms.size() == 6);
    for (const ArmSummary& a : s.arms) {
        CHECK(a.folds.size() == 3);
        CHECK(a.aggregate.has_value());
    }
    CHECK(s.comparisons.size() == 3);
    CHECK(s.arm(Strategy::Warmup, RegMode::Separate) != nullptr);
    CHECK(selected_lambda_report(s).size() == 18);

    SUBCASE("identical results with a thread pool") {
        NestedCvOptions par = opt;
        par.threads = 3;
        const RunSummary p = nested_cv(raw, plan, par);
        REQUIRE(p.folds.size() == s.folds.size());
        for (std::size_t i = 0; i < s.folds.size(); ++i) {
            CHECK(p.folds[i].metrics.loglik == s.folds[i].metrics.loglik);
            CHECK(p.folds[i].metrics.rmse == s.folds[i].metrics.rmse);
            CHECK(p.folds[i].candidate_scores == s.folds[i].candidate_scores);
        }
    }
    SUBCASE("fold count beyond data size") {
        CvPlan bad = plan;
        bad.inner_folds = 40;
        CHECK_THROWS_AS(nested_cv(raw, bad, opt), ConfigError);
    }
}

TEST_CASE("demo pipelines run end to end at toy scale") {
    SUBCASE("sine arms") {
        SineDemoSettings st;
        st.n = 60;
        st.base.epochs_per_stage = 2;
        st.base.arch.hidden = {4};
        st.lambda_grid = {1e-3, 1e-1};
        st.grid_points = 50;
        const Dataset raw = generate({SyntheticKind::Sine, st.n, 1});
        for (SineArm arm : kAllSineArms) {
            const SineArmResult r = run_sine_arm(raw, arm, 5, st);
            CHECK(r.fit.x.size() == 50);
            CHECK(std::isfinite(r.fit.mean_rmse));
            if (arm == SineArm::NoWarmupEqual) CHECK(r.selection_scores.size() == 2);
            if (arm == SineArm::NoWarmupSeparate)
                CHECK(r.config.lambda_var == doctest::Approx(st.separate_ratio * r.config.lambda_mean));
        }
    }
    SUBCASE("quadratic sweep") {
        SweepSettings st;
        st.base.epochs_per_stage = 2;
        st.base.arch.hidden = {4};
        st.grid_points = 21;
        const Dataset raw = generate({SyntheticKind::QuadraticHetero, 50, 2});
        const auto panels = regularization_sweep(raw, 3, st);
        REQUIRE(panels.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(panels[i].lambda_var == st.lambda_vars[i]);
            CHECK(panels[i].config.lambda_mean == 0.1);
            CHECK(panels[i].fit.variance_ratio() >= 1.0);
        }
    }
}
