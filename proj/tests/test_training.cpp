#include <doctest.h>

#include <cmath>
#include <random>

#include "mve/errors.hpp"
#include "mve/training.hpp"

using namespace mve;

namespace {

Dataset toy_data(std::size_t n, std::uint64_t seed) {
    Dataset d;
    d.X = Matrix(n, 1);
    d.y.resize(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng);
        d.X(i, 0) = x;
        d.y[i] = 1.5 * x * x - 0.5 + (0.1 + 0.3 * std::abs(x)) * nd(rng);
    }
    return d;
}

TrainConfig small_config(Strategy s) {
    TrainConfig c;
    c.strategy = s;
    c.epochs_per_stage = 15;
    c.batch_size = 16;
    c.arch.hidden = {8, 4};
    c.seed = 99;
    return c;
}

bool same_parameters(const Mlp& a, const Mlp& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        if (a.layers[k].weights != b.layers[k].weights || a.layers[k].biases != b.layers[k].biases) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("freeze masks per strategy and stage") {
    CHECK(freeze_mask(Strategy::NoWarmup, 1).empty());
    CHECK(freeze_mask(Strategy::Warmup, 1) == FreezeMask{false, true});
    CHECK(freeze_mask(Strategy::Warmup, 2).empty());
    CHECK(freeze_mask(Strategy::WarmupFixedMean, 1) == FreezeMask{false, true});
    CHECK(freeze_mask(Strategy::WarmupFixedMean, 2) == FreezeMask{true, false});
    CHECK(freeze_mask(Strategy::Warmup, 1).contains(ParamGroup::VarianceHead));
    CHECK_THROWS_AS(freeze_mask(Strategy::NoWarmup, 2), ConfigError);
    CHECK_THROWS_AS(freeze_mask(Strategy::Warmup, 3), ConfigError);
    CHECK(stage_loss(Strategy::Warmup, 1) == LossKind::FixedVariance);
    CHECK(stage_loss(Strategy::Warmup, 2) == LossKind::Nll);
    CHECK(stage_loss(Strategy::NoWarmup, 1) == LossKind::Nll);
}

TEST_CASE("config validation and text round trip") {
    TrainConfig c = small_config(Strategy::WarmupFixedMean);
    c.reg_mode = RegMode::Separate;
    c.lambda_mean = 1e-4;
    c.lambda_var = 0.1 / 3.0;
    c.reduction = BatchReduction::Sum;
    c.adam.learning_rate = 3e-4;
    c.arch.variance_floor = 1e-7;
    const TrainConfig back = config_from_text(config_to_text(c));
    CHECK(config_to_text(back) == config_to_text(c));
    CHECK(back.lambda_var == c.lambda_var);
    CHECK(back.arch.hidden == c.arch.hidden);
    CHECK(back.reduction == BatchReduction::Sum);

    TrainConfig bad = c;
    bad.reg_mode = RegMode::Equal;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.lambda_var = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(config_from_text("nonsense_key = 3"), ConfigError);
    CHECK_THROWS_AS(config_from_text("epochs_per_stage = many"), ConfigError);
    for (Strategy s : kAllStrategies) CHECK(parse_strategy(strategy_name(s)) == s);
    for (RegMode m : kAllRegModes) CHECK(parse_reg_mode(reg_mode_name(m)) == m);
}

TEST_CASE("frozen heads stay bit-identical through their frozen stage") {
    const Dataset d = toy_data(64, 1);
    SUBCASE("warm-up freezes the variance head") {
        TrainConfig c = small_config(Strategy::Warmup);
        MveNetwork net = initial_network(1, c);
        const MveNetwork start = net;
        TrainTrace t;
        train_stage(net, d, c, 1, t);
        CHECK(same_parameters(net.logvar_net, start.logvar_net));
        CHECK_FALSE(same_parameters(net.mean_net, start.mean_net));
    }
    SUBCASE("fixed-mean stage freezes the mean head") {
        TrainConfig c = small_config(Strategy::WarmupFixedMean);
        MveNetwork net = initial_network(1, c);
        TrainTrace t;
        train_stage(net, d, c, 1, t);
        const MveNetwork after_warmup = net;
        train_stage(net, d, c, 2, t);
        CHECK(same_parameters(net.mean_net, after_warmup.mean_net));
        CHECK_FALSE(same_parameters(net.logvar_net, after_warmup.logvar_net));
    }
}

TEST_CASE("training is reproducible and equals stage-by-stage training") {
    const Dataset d = toy_data(50, 2);
    for (Strategy s : kAllStrategies) {
        const TrainConfig c = small_config(s);
        const TrainResult a = train_new(d, c);
        const TrainResult b = train_new(d, c);
        CHECK(same_parameters(a.net.mean_net, b.net.mean_net));
        CHECK(same_parameters(a.net.logvar_net, b.net.logvar_net));
        CHECK(a.trace.train_loss == b.trace.train_loss);

        MveNetwork net = initial_network(1, c);
        TrainTrace t;
        for (std::size_t st = 1; st <= c.stage_count(); ++st) train_stage(net, d, c, st, t);
        CHECK(same_parameters(net.mean_net, a.net.mean_net));
        CHECK(same_parameters(net.logvar_net, a.net.logvar_net));
        CHECK(t.train_loss == a.trace.train_loss);
        CHECK(a.trace.train_loss.size() == c.total_epochs());
        CHECK(a.trace.stage_boundaries.size() == c.stage_count());
    }
}

TEST_CASE("initial network does not depend on strategy or L2 constants") {
    TrainConfig a = small_config(Strategy::NoWarmup);
    TrainConfig b = small_config(Strategy::WarmupFixedMean);
    b.reg_mode = RegMode::Separate;
    b.lambda_mean = 0.1;
    b.lambda_var = 0.01;
    const MveNetwork na = initial_network(1, a), nb = initial_network(1, b);
    CHECK(same_parameters(na.mean_net, nb.mean_net));
    CHECK(same_parameters(na.logvar_net, nb.logvar_net));
}

TEST_CASE("warm-up loss decreases and validation is traced") {
    const Dataset d = toy_data(128, 3);
    const Dataset v = toy_data(40, 4);
    TrainConfig c = small_config(Strategy::Warmup);
    c.epochs_per_stage = 40;
    const TrainResult r = train_new(d, c, &v);
    CHECK(r.trace.train_loss[39] < r.trace.train_loss[0]);
    CHECK(r.trace.validation_loss.size() == 80);
    CHECK(r.trace.stage_boundaries == std::vector<std::size_t>{0, 40});
}

TEST_CASE("error handling") {
    const TrainConfig c = small_config(Strategy::NoWarmup);
    SUBCASE("empty data") {
        Dataset empty;
        empty.X = Matrix(0, 1);
        CHECK_THROWS_AS(train_new(empty, c), DataError);
    }
    SUBCASE("non-finite loss aborts with a divergence error") {
        Dataset d = toy_data(20, 5);
        d.y[7] = 1e200;  // squared residual overflows
        CHECK_THROWS_AS(train_new(d, c), DivergenceError);
        d.y[7] = std::nan("");
        CHECK_THROWS_AS(train_new(d, c), DivergenceError);
    }
    SUBCASE("width mismatch") {
        Dataset d = toy_data(10, 6);
        CHECK_THROWS_AS(train(make_mve_network(2, 0), d, c), ConfigError);
    }
}
