#include "mve/mve_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <nlohmann/json.hpp>

#include "mve/errors.hpp"
#include "mve/rng.hpp"

namespace mve {

void MveNetwork::validate() const {
    mean_net.validate();
    logvar_net.validate();
    if (mean_net.input_size() != logvar_net.input_size()) {
        throw ConfigError("mean and variance sub-networks disagree on input width");
    }
    if (mean_net.output_size() != 1 || logvar_net.output_size() != 1) {
        throw ConfigError("both sub-networks must have a single output");
    }
    if (logvar_net.layers.back().activation != Activation::Exp) {
        throw ConfigError("variance sub-network must end in an exponential output");
    }
    if (!(variance_floor > 0.0)) throw ConfigError("variance floor must be positive");
}

MveNetwork make_mve_network(std::size_t input_dim, std::uint64_t seed, const MveArchitecture& arch,
                            double lambda_mean, double lambda_var) {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
    sizes.push_back(1);
    std::vector<Activation> mean_acts(arch.hidden.size(), Activation::Elu);
    std::vector<Activation> var_acts = mean_acts;
    mean_acts.push_back(Activation::Linear);
    var_acts.push_back(Activation::Exp);

    MveNetwork net;
    net.mean_net = init_network(sizes, mean_acts, derive_seed(seed, {0}), std::nullopt, lambda_mean);
    net.logvar_net = init_network(sizes, var_acts, derive_seed(seed, {1}), arch.variance_bias_init, lambda_var);
    net.variance_floor = arch.variance_floor;
    net.validate();
    return net;
}

Prediction predict(const MveNetwork& net, std::span<const double> x, MveWorkspace& ws) {
    Prediction p;
    p.mean = forward(net.mean_net, x, ws.mean_cache)[0];
    p.variance = std::max(forward(net.logvar_net, x, ws.var_cache)[0], net.variance_floor);
    return p;
}

Prediction predict(const MveNetwork& net, std::span<const double> x) {
    MveWorkspace ws;
    return predict(net, x, ws);
}

namespace {

double batch_nll(const MveNetwork& net, const BatchView& batch) {
    const std::size_t n = batch.size();
    if (n == 0) throw DataError("loss evaluated on an empty batch");
    if (batch.y.size() != batch.X.rows) throw DataError("target length does not match covariate rows");
    MveWorkspace ws;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = batch.index(i);
        const Prediction p = predict(net, batch.X.row(r), ws);
        const double resid = batch.y[r] - p.mean;
        total += 0.5 * std::log(p.variance) + 0.5 * resid * resid / p.variance;
    }
    return total / static_cast<double>(n);
}

}  // namespace

double nll_loss(const MveNetwork& net, const BatchView& batch) { return batch_nll(net, batch); }

double fixed_variance_loss(const MveNetwork& net, const BatchView& batch) { return batch_nll(net, batch); }

LossGradients loss_and_gradients(const MveNetwork& net, const BatchView& batch, LossKind kind, HeadMask mask,
                                 MveWorkspace& ws, BatchReduction reduction) {
    LossGradients out;
    loss_and_gradients(net, batch, kind, mask, ws, out, reduction);
    return out;
}

void loss_and_gradients(const MveNetwork& net, const BatchView& batch, LossKind kind, HeadMask mask,
                        MveWorkspace& ws, LossGradients& out, BatchReduction reduction) {
    const std::size_t n = batch.size();
    if (n == 0) throw DataError("loss evaluated on an empty batch");
    if (batch.y.size() != batch.X.rows) throw DataError("target length does not match covariate rows");
    if (kind == LossKind::FixedVariance) mask.var_frozen = true;

    if (out.mean.layers.size() != net.mean_net.layers.size()) out.mean = zero_gradients(net.mean_net);
    else out.mean.set_zero();
    if (out.var.layers.size() != net.logvar_net.layers.size()) out.var = zero_gradients(net.logvar_net);
    else out.var.set_zero();
    out.penalty = 0.0;
    const double w = reduction == BatchReduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
    const auto mu = forward_batch(net.mean_net, batch.X, batch.rows, ws.mean_batch);
    const auto raw_var = forward_batch(net.logvar_net, batch.X, batch.rows, ws.var_batch);
    ws.mean_upstream.resize(n);
    ws.var_upstream.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool floored = raw_var[i] < net.variance_floor;
        const double var = floored ? net.variance_floor : raw_var[i];
        const double resid = batch.y[batch.index(i)] - mu[i];
        total += 0.5 * std::log(var) + 0.5 * resid * resid / var;
        ws.mean_upstream[i] = -resid / var;
        ws.var_upstream[i] = floored ? 0.0 : 0.5 / var - 0.5 * resid * resid / (var * var);
    }
    if (!mask.mean_frozen) accumulate_gradients_batch(net.mean_net, ws.mean_upstream, ws.mean_batch, out.mean, w);
    if (!mask.var_frozen) accumulate_gradients_batch(net.logvar_net, ws.var_upstream, ws.var_batch, out.var, w);
    out.data_loss = total * w;
    if (!mask.mean_frozen) {
        add_l2_gradient(net.mean_net, out.mean);
        out.penalty += l2_penalty(net.mean_net);
    }
    if (!mask.var_frozen) {
        add_l2_gradient(net.logvar_net, out.var);
        out.penalty += l2_penalty(net.logvar_net);
    }
}

namespace {

nlohmann::json mlp_to_json(const Mlp& mlp) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : mlp.layers) {
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"activation", std::string(activation_name(l.activation))},
                          {"weights", l.weights},
                          {"biases", l.biases}});
    }
    return {{"l2_constant", mlp.l2_constant}, {"layers", layers}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp mlp;
    mlp.l2_constant = j.at("l2_constant").get<double>();
    for (const auto& jl : j.at("layers")) {
        DenseLayer l;
        l.in = jl.at("in").get<std::size_t>();
        l.out = jl.at("out").get<std::size_t>();
        l.activation = parse_activation(jl.at("activation").get<std::string>());
        l.weights = jl.at("weights").get<std::vector<double>>();
        l.biases = jl.at("biases").get<std::vector<double>>();
        mlp.layers.push_back(std::move(l));
    }
    return mlp;
}

}  // namespace

std::string serialize_network(const MveNetwork& net) {
    nlohmann::json j{{"format", "mve-network"},
                     {"version", 1},
                     {"variance_floor", net.variance_floor},
                     {"mean_net", mlp_to_json(net.mean_net)},
                     {"logvar_net", mlp_to_json(net.logvar_net)}};
    return j.dump(1);
}

MveNetwork deserialize_network(const std::string& text) {
    MveNetwork net;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != "mve-network") throw DataError("not an mve-network document");
        net.variance_floor = j.at("variance_floor").get<double>();
        net.mean_net = mlp_from_json(j.at("mean_net"));
        net.logvar_net = mlp_from_json(j.at("logvar_net"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed network file: ") + e.what());
    }
    net.validate();
    return net;
}

}  // namespace mve
