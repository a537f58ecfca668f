#include "mve/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "mve/errors.hpp"
#include "mve/rng.hpp"

namespace mve {

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::NoWarmup: return "no-warmup";
        case Strategy::Warmup: return "warmup";
        case Strategy::WarmupFixedMean: return "warmup-fixed-mean";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : kAllStrategies) {
        if (strategy_name(s) == name) return s;
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view reg_mode_name(RegMode m) { return m == RegMode::Equal ? "equal" : "separate"; }

RegMode parse_reg_mode(std::string_view name) {
    if (name == "equal") return RegMode::Equal;
    if (name == "separate") return RegMode::Separate;
    throw ConfigError("unknown regularization mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (!(lambda_mean >= 0.0) || !(lambda_var >= 0.0)) throw ConfigError("L2 constants must be nonnegative");
    if (reg_mode == RegMode::Equal && lambda_mean != lambda_var) {
        throw ConfigError("equal regularization requires lambda_mean == lambda_var");
    }
    if (epochs_per_stage < 1) throw ConfigError("epochs_per_stage must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(clip_threshold > 0.0)) throw ConfigError("clip threshold must be positive");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(arch.variance_floor > 0.0)) throw ConfigError("variance floor must be positive");
    if (arch.hidden.empty()) throw ConfigError("at least one hidden layer is required");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
    }
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': not a nonnegative integer: '" + v + "'");
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string config_to_text(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "strategy = " << strategy_name(cfg.strategy) << '\n';
    os << "reg_mode = " << reg_mode_name(cfg.reg_mode) << '\n';
    os << "lambda_mean = " << fmt_double(cfg.lambda_mean) << '\n';
    os << "lambda_var = " << fmt_double(cfg.lambda_var) << '\n';
    os << "epochs_per_stage = " << cfg.epochs_per_stage << '\n';
    os << "total_epochs = " << cfg.total_epochs() << '\n';
    os << "batch_size = " << cfg.batch_size << '\n';
    os << "clip_threshold = " << fmt_double(cfg.clip_threshold) << '\n';
    os << "clip_norm = global_l2\n";
    os << "batch_reduction = " << (cfg.reduction == BatchReduction::Mean ? "mean" : "sum") << '\n';
    os << "adam_reset_between_stages = true\n";
    os << "seed = " << cfg.seed << '\n';
    os << "learning_rate = " << fmt_double(cfg.adam.learning_rate) << '\n';
    os << "beta1 = " << fmt_double(cfg.adam.beta1) << '\n';
    os << "beta2 = " << fmt_double(cfg.adam.beta2) << '\n';
    os << "epsilon = " << fmt_double(cfg.adam.epsilon) << '\n';
    os << "hidden =";
    for (std::size_t h : cfg.arch.hidden) os << ' ' << h;
    os << '\n';
    os << "variance_bias_init = " << fmt_double(cfg.arch.variance_bias_init) << '\n';
    os << "variance_floor = " << fmt_double(cfg.arch.variance_floor) << '\n';
    return os.str();
}

TrainConfig config_from_text(std::string_view text) {
    TrainConfig cfg;
    std::istringstream is{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string val = trim(std::string_view(t).substr(eq + 1));
        if (key == "strategy") cfg.strategy = parse_strategy(val);
        else if (key == "reg_mode") cfg.reg_mode = parse_reg_mode(val);
        else if (key == "lambda_mean") cfg.lambda_mean = parse_double(key, val);
        else if (key == "lambda_var") cfg.lambda_var = parse_double(key, val);
        else if (key == "epochs_per_stage") cfg.epochs_per_stage = parse_uint(key, val);
        else if (key == "batch_size") cfg.batch_size = parse_uint(key, val);
        else if (key == "clip_threshold") cfg.clip_threshold = parse_double(key, val);
        else if (key == "batch_reduction") {
            if (val == "mean") cfg.reduction = BatchReduction::Mean;
            else if (val == "sum") cfg.reduction = BatchReduction::Sum;
            else throw ConfigError("config key 'batch_reduction': expected mean or sum, got '" + val + "'");
        } else if (key == "seed") cfg.seed = parse_uint(key, val);
        else if (key == "learning_rate") cfg.adam.learning_rate = parse_double(key, val);
        else if (key == "beta1") cfg.adam.beta1 = parse_double(key, val);
        else if (key == "beta2") cfg.adam.beta2 = parse_double(key, val);
        else if (key == "epsilon") cfg.adam.epsilon = parse_double(key, val);
        else if (key == "variance_bias_init") cfg.arch.variance_bias_init = parse_double(key, val);
        else if (key == "variance_floor") cfg.arch.variance_floor = parse_double(key, val);
        else if (key == "hidden") {
            cfg.arch.hidden.clear();
            std::istringstream hs(val);
            std::string tok;
            while (hs >> tok) cfg.arch.hidden.push_back(parse_uint(key, tok));
        } else if (key == "total_epochs" || key == "clip_norm" ||
                   key == "adam_reset_between_stages") {
            // informational, derived from the other fields
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

FreezeMask freeze_mask(Strategy strategy, std::size_t stage) {
    switch (strategy) {
        case Strategy::NoWarmup:
            if (stage == 1) return {};
            break;
        case Strategy::Warmup:
            if (stage == 1) return {false, true};
            if (stage == 2) return {};
            break;
        case Strategy::WarmupFixedMean:
            if (stage == 1) return {false, true};
            if (stage == 2) return {true, false};
            break;
    }
    throw ConfigError("strategy '" + std::string(strategy_name(strategy)) + "' has no stage " + std::to_string(stage));
}

LossKind stage_loss(Strategy strategy, std::size_t stage) {
    const FreezeMask m = freeze_mask(strategy, stage);
    return m.variance_head ? LossKind::FixedVariance : LossKind::Nll;
}

namespace {

void check_inputs(const MveNetwork& net, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    if (data.size() == 0) throw DataError("cannot train on an empty dataset");
    if (data.X.cols != net.input_size()) throw ConfigError("dataset width does not match the network input");
}

}  // namespace

void train_stage(MveNetwork& net, const Dataset& data, const TrainConfig& cfg, std::size_t stage, TrainTrace& trace,
                 const Dataset* validation) {
    check_inputs(net, data, cfg);
    const FreezeMask frozen = freeze_mask(cfg.strategy, stage);
    const LossKind kind = stage_loss(cfg.strategy, stage);
    const HeadMask mask{frozen.mean_head, frozen.variance_head};
    net.mean_net.l2_constant = cfg.lambda_mean;
    net.logvar_net.l2_constant = cfg.lambda_var;

    const std::size_t n = data.size();
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5u, stage}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    MveWorkspace ws;
    LossGradients lg;
    AdamState mean_adam = AdamState::for_network(net.mean_net, cfg.adam);
    AdamState var_adam = AdamState::for_network(net.logvar_net, cfg.adam);
    trace.stage_boundaries.push_back(trace.train_loss.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            const BatchView batch{data.X, data.y, std::span<const std::size_t>(order.data() + start, len)};
            loss_and_gradients(net, batch, kind, mask, ws, lg, cfg.reduction);
            const double objective = lg.data_loss + lg.penalty;
            if (!std::isfinite(objective)) {
                throw DivergenceError("non-finite training loss in stage " + std::to_string(stage) + ", epoch " +
                                      std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1) +
                                      " (strategy " + std::string(strategy_name(cfg.strategy)) + ")");
            }
            GradientSet* active[2];
            std::size_t n_active = 0;
            if (!frozen.mean_head) active[n_active++] = &lg.mean;
            if (!frozen.variance_head) active[n_active++] = &lg.var;
            clip_gradients_jointly(std::span<GradientSet* const>(active, n_active), cfg.clip_threshold);
            if (!frozen.mean_head) adam_step(net.mean_net, lg.mean, mean_adam);
            if (!frozen.variance_head) adam_step(net.logvar_net, lg.var, var_adam);
            epoch_loss += objective;
            ++batches;
        }
        trace.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        if (validation != nullptr) trace.validation_loss.push_back(nll_loss(net, validation->view()));
    }
}

TrainResult train(MveNetwork net, const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
    check_inputs(net, data, cfg);
    TrainResult result;
    result.trace.train_loss.reserve(cfg.total_epochs());
    for (std::size_t stage = 1; stage <= cfg.stage_count(); ++stage) {
        train_stage(net, data, cfg, stage, result.trace, validation);
    }
    result.net = std::move(net);
    return result;
}

MveNetwork initial_network(std::size_t input_dim, const TrainConfig& cfg) {
    cfg.validate();
    return make_mve_network(input_dim, derive_seed(cfg.seed, {0x1u}), cfg.arch, cfg.lambda_mean, cfg.lambda_var);
}

TrainResult train_new(const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
    return train(initial_network(data.X.cols, cfg), data, cfg, validation);
}

}  // namespace mve
