#include "mve/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mve/errors.hpp"
#include "mve/kernels.hpp"
#include "mve/rng.hpp"

namespace mve {

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::Elu: return "elu";
        case Activation::Linear: return "linear";
        case Activation::Exp: return "exp";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "elu") return Activation::Elu;
    if (name == "linear") return Activation::Linear;
    if (name == "exp") return Activation::Exp;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t Mlp::input_size() const { return layers.empty() ? 0 : layers.front().in; }

std::size_t Mlp::output_size() const { return layers.empty() ? 0 : layers.back().out; }

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
}

void Mlp::validate() const {
    if (layers.empty()) throw ConfigError("network has no layers");
    if (!(l2_constant >= 0.0)) throw ConfigError("l2 constant must be nonnegative");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.in == 0 || l.out == 0) throw ConfigError("layer " + std::to_string(k) + " has a zero dimension");
        if (l.weights.size() != l.in * l.out || l.biases.size() != l.out) {
            throw ConfigError("layer " + std::to_string(k) + " parameter arrays do not match " +
                              std::to_string(l.out) + "x" + std::to_string(l.in));
        }
        if (k > 0 && layers[k - 1].out != l.in) {
            throw ConfigError("layer " + std::to_string(k) + " input width " + std::to_string(l.in) +
                              " does not chain with previous output " + std::to_string(layers[k - 1].out));
        }
    }
}

double GradientSet::squared_norm() const {
    const auto& k = kernels::active();
    double s = 0.0;
    for (const auto& l : layers) {
        s += k.sum_squares(l.weights.data(), l.weights.size());
        s += k.sum_squares(l.biases.data(), l.biases.size());
    }
    return s;
}

double GradientSet::global_norm() const { return std::sqrt(squared_norm()); }

void GradientSet::set_zero() {
    for (auto& l : layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.biases.begin(), l.biases.end(), 0.0);
    }
}

void GradientSet::scale(double factor) {
    const auto& k = kernels::active();
    for (auto& l : layers) {
        k.scale(factor, l.weights.data(), l.weights.size());
        k.scale(factor, l.biases.data(), l.biases.size());
    }
}

AdamState AdamState::for_network(const Mlp& mlp, const AdamSettings& settings) {
    AdamState s;
    s.first_moment = zero_gradients(mlp);
    s.second_moment = zero_gradients(mlp);
    s.settings = settings;
    return s;
}

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::Elu: return z > 0.0 ? z : std::expm1(z);
        case Activation::Linear: return z;
        case Activation::Exp: return std::exp(z);
    }
    return z;
}

namespace {

// d activation / d z, written in terms of the stored output where possible.
double activation_slope(Activation a, double z, double out) {
    switch (a) {
        case Activation::Elu: return z > 0.0 ? 1.0 : out + 1.0;
        case Activation::Linear: return 1.0;
        case Activation::Exp: return out;
    }
    return 1.0;
}

void size_cache(const Mlp& mlp, ForwardCache& cache) {
    const std::size_t n = mlp.layers.size();
    if (cache.pre_activations.size() == n && cache.activations.size() == n + 1 &&
        cache.activations[0].size() == mlp.input_size()) {
        bool same = true;
        for (std::size_t k = 0; k < n && same; ++k) same = cache.pre_activations[k].size() == mlp.layers[k].out;
        if (same) return;
    }
    cache.activations.assign(n + 1, {});
    cache.pre_activations.assign(n, {});
    cache.deltas.assign(n, {});
    cache.activations[0].resize(mlp.input_size());
    for (std::size_t k = 0; k < n; ++k) {
        cache.activations[k + 1].resize(mlp.layers[k].out);
        cache.pre_activations[k].resize(mlp.layers[k].out);
        cache.deltas[k].resize(mlp.layers[k].out);
    }
}

}  // namespace

std::span<const double> forward(const Mlp& mlp, std::span<const double> x, ForwardCache& cache) {
    if (mlp.layers.empty()) throw ConfigError("network has no layers");
    if (x.size() != mlp.input_size()) {
        throw ConfigError("input has " + std::to_string(x.size()) + " features, network expects " +
                          std::to_string(mlp.input_size()));
    }
    size_cache(mlp, cache);
    const auto& kern = kernels::active();
    std::copy(x.begin(), x.end(), cache.activations[0].begin());
    for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
        const DenseLayer& layer = mlp.layers[k];
        const double* in = cache.activations[k].data();
        double* pre = cache.pre_activations[k].data();
        double* out = cache.activations[k + 1].data();
        for (std::size_t o = 0; o < layer.out; ++o) {
            pre[o] = layer.biases[o] + kern.dot(layer.weights.data() + o * layer.in, in, layer.in);
        }
        activate(layer.activation, pre, out, layer.out);
    }
    cache.valid = true;
    return cache.activations.back();
}

void activate(Activation a, const double* z, double* out, std::size_t n) {
    const auto& kern = kernels::active();
    switch (a) {
        case Activation::Elu: kern.elu(z, out, n); return;
        case Activation::Exp: kern.exp(z, out, n); return;
        case Activation::Linear: std::copy(z, z + n, out); return;
    }
}

std::span<const double> forward_batch(const Mlp& mlp, const Matrix& X, std::span<const std::size_t> rows,
                                      BatchCache& cache) {
    if (mlp.layers.empty()) throw ConfigError("network has no layers");
    if (X.cols != mlp.input_size()) {
        throw ConfigError("input has " + std::to_string(X.cols) + " features, network expects " +
                          std::to_string(mlp.input_size()));
    }
    const std::size_t B = rows.empty() ? X.rows : rows.size();
    const std::size_t n = mlp.layers.size();
    cache.batch = B;
    cache.activations.resize(n + 1);
    cache.pre_activations.resize(n);
    cache.deltas.resize(n);
    cache.activations[0].resize(X.cols * B);
    for (std::size_t b = 0; b < B; ++b) {
        const auto src = X.row(rows.empty() ? b : rows[b]);
        for (std::size_t c = 0; c < X.cols; ++c) cache.activations[0][c * B + b] = src[c];
    }
    const auto& kern = kernels::active();
    for (std::size_t k = 0; k < n; ++k) {
        const DenseLayer& layer = mlp.layers[k];
        auto& pre = cache.pre_activations[k];
        auto& out = cache.activations[k + 1];
        pre.resize(layer.out * B);
        out.resize(layer.out * B);
        cache.deltas[k].resize(layer.out * B);
        const double* in = cache.activations[k].data();
        for (std::size_t o = 0; o < layer.out; ++o) std::fill_n(pre.data() + o * B, B, layer.biases[o]);
        kern.gemm_nn(layer.weights.data(), layer.out, layer.in, in, pre.data(), B);
        activate(layer.activation, pre.data(), out.data(), out.size());
    }
    cache.valid = true;
    return cache.activations.back();
}

void accumulate_gradients_batch(const Mlp& mlp, std::span<const double> upstream, BatchCache& cache,
                                GradientSet& grads, double weight) {
    const std::size_t n = mlp.layers.size();
    const std::size_t B = cache.batch;
    if (!cache.valid || cache.pre_activations.size() != n) {
        throw UsageError("backward called without a forward cache for this network");
    }
    if (upstream.size() != mlp.output_size() * B) throw ConfigError("upstream gradient has the wrong size");
    if (grads.layers.size() != n) throw ConfigError("gradient set does not match the network");
    const auto& kern = kernels::active();

    std::copy(upstream.begin(), upstream.end(), cache.deltas[n - 1].begin());
    for (std::size_t k = n; k-- > 0;) {
        const DenseLayer& layer = mlp.layers[k];
        auto& delta = cache.deltas[k];
        const auto& pre = cache.pre_activations[k];
        const auto& out = cache.activations[k + 1];
        const double* in = cache.activations[k].data();
        switch (layer.activation) {
            case Activation::Elu: kern.elu_backward(pre.data(), out.data(), delta.data(), delta.size()); break;
            case Activation::Exp: kern.mul(out.data(), delta.data(), delta.size()); break;
            case Activation::Linear: break;
        }
        LayerGradient& g = grads.layers[k];
        for (std::size_t o = 0; o < layer.out; ++o) g.biases[o] += weight * kern.sum(delta.data() + o * B, B);
        kern.gemm_nt(weight, delta.data(), layer.out, in, layer.in, g.weights.data(), B);
        if (k > 0) {
            auto& below = cache.deltas[k - 1];
            std::fill(below.begin(), below.end(), 0.0);
            kern.gemm_tn(layer.weights.data(), layer.out, layer.in, delta.data(), below.data(), B);
        }
    }
}

std::vector<double> forward(const Mlp& mlp, std::span<const double> x) {
    ForwardCache cache;
    auto out = forward(mlp, x, cache);
    return {out.begin(), out.end()};
}

GradientSet zero_gradients(const Mlp& mlp) {
    GradientSet g;
    g.layers.reserve(mlp.layers.size());
    for (const auto& l : mlp.layers) {
        g.layers.push_back({std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.biases.size(), 0.0)});
    }
    return g;
}

void accumulate_gradients(const Mlp& mlp, std::span<const double> upstream, ForwardCache& cache,
                          GradientSet& grads, double weight) {
    const std::size_t n = mlp.layers.size();
    if (!cache.valid || cache.pre_activations.size() != n) {
        throw UsageError("backward called without a forward cache for this network");
    }
    if (upstream.size() != mlp.output_size()) throw ConfigError("upstream gradient has the wrong size");
    if (grads.layers.size() != n) throw ConfigError("gradient set does not match the network");
    const auto& kern = kernels::active();

    std::copy(upstream.begin(), upstream.end(), cache.deltas[n - 1].begin());
    for (std::size_t k = n; k-- > 0;) {
        const DenseLayer& layer = mlp.layers[k];
        auto& delta = cache.deltas[k];
        const auto& pre = cache.pre_activations[k];
        const auto& out = cache.activations[k + 1];
        const double* in = cache.activations[k].data();
        LayerGradient& g = grads.layers[k];
        for (std::size_t o = 0; o < layer.out; ++o) {
            delta[o] *= activation_slope(layer.activation, pre[o], out[o]);
            const double d = weight * delta[o];
            g.biases[o] += d;
            if (d != 0.0) kern.axpy(d, in, g.weights.data() + o * layer.in, layer.in);
        }
        if (k > 0) {
            auto& below = cache.deltas[k - 1];
            std::fill(below.begin(), below.end(), 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                if (delta[o] != 0.0) kern.axpy(delta[o], layer.weights.data() + o * layer.in, below.data(), layer.in);
            }
        }
    }
}

void add_l2_gradient(const Mlp& mlp, GradientSet& grads) {
    if (mlp.l2_constant == 0.0) return;
    const auto& kern = kernels::active();
    const double c = 2.0 * mlp.l2_constant;
    for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
        const auto& w = mlp.layers[k].weights;
        kern.axpy(c, w.data(), grads.layers[k].weights.data(), w.size());
    }
}

double l2_penalty(const Mlp& mlp) {
    if (mlp.l2_constant == 0.0) return 0.0;
    const auto& kern = kernels::active();
    double s = 0.0;
    for (const auto& l : mlp.layers) s += kern.sum_squares(l.weights.data(), l.weights.size());
    return mlp.l2_constant * s;
}

GradientSet backward(const Mlp& mlp, std::span<const double> upstream, ForwardCache& cache) {
    GradientSet g = zero_gradients(mlp);
    accumulate_gradients(mlp, upstream, cache, g);
    add_l2_gradient(mlp, g);
    return g;
}

double clip_gradients_jointly(std::span<GradientSet* const> sets, double threshold) {
    if (!(threshold > 0.0)) throw ConfigError("clip threshold must be positive");
    double sq = 0.0;
    for (const GradientSet* g : sets) sq += g->squared_norm();
    const double norm = std::sqrt(sq);
    if (norm <= threshold) return 1.0;
    const double factor = threshold / norm;
    for (GradientSet* g : sets) g->scale(factor);
    return factor;
}

GradientSet clip_gradients(GradientSet grads, double threshold) {
    GradientSet* p = &grads;
    clip_gradients_jointly(std::span<GradientSet* const>(&p, 1), threshold);
    return grads;
}

void adam_step(Mlp& mlp, const GradientSet& grads, AdamState& state) {
    if (grads.layers.size() != mlp.layers.size() || state.first_moment.layers.size() != mlp.layers.size()) {
        throw ConfigError("adam_step: gradient or optimizer state does not match the network");
    }
    const auto& kern = kernels::active();
    const AdamSettings& s = state.settings;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(s.beta1, t);
    const double bc2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
        DenseLayer& l = mlp.layers[k];
        const LayerGradient& g = grads.layers[k];
        LayerGradient& m = state.first_moment.layers[k];
        LayerGradient& v = state.second_moment.layers[k];
        if (g.weights.size() != l.weights.size() || g.biases.size() != l.biases.size()) {
            throw ConfigError("adam_step: layer " + std::to_string(k) + " shape mismatch");
        }
        kern.adam_update(l.weights.data(), g.weights.data(), m.weights.data(), v.weights.data(), l.weights.size(),
                         s.learning_rate, s.beta1, s.beta2, s.epsilon, bc1, bc2);
        kern.adam_update(l.biases.data(), g.biases.data(), m.biases.data(), v.biases.data(), l.biases.size(),
                         s.learning_rate, s.beta1, s.beta2, s.epsilon, bc1, bc2);
    }
}

Mlp init_network(std::span<const std::size_t> layer_sizes, std::span<const Activation> activations,
                 std::uint64_t seed, std::optional<double> output_bias_init, double l2_constant) {
    if (layer_sizes.size() < 2) throw ConfigError("layer_sizes needs an input width and at least one layer");
    if (activations.size() != layer_sizes.size() - 1) {
        throw ConfigError("need one activation per layer");
    }
    Rng rng(seed);
    Mlp mlp;
    mlp.l2_constant = l2_constant;
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        DenseLayer l;
        l.in = layer_sizes[k];
        l.out = layer_sizes[k + 1];
        l.activation = activations[k];
        const double limit = std::sqrt(3.0 / static_cast<double>(l.in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        l.weights.resize(l.in * l.out);
        for (double& w : l.weights) w = dist(rng);
        l.biases.assign(l.out, 0.0);
        mlp.layers.push_back(std::move(l));
    }
    if (output_bias_init) std::fill(mlp.layers.back().biases.begin(), mlp.layers.back().biases.end(), *output_bias_init);
    mlp.validate();
    return mlp;
}

}  // namespace mve
