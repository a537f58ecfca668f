#pragma once
// Dense multilayer perceptron: parameters, forward pass, exact gradients,
// Adam with global-norm clipping, and an L2 weight penalty.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mve/matrix.hpp"

namespace mve {

enum class Activation { Elu, Linear, Exp };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

// Weights are stored row-major as [out x in].
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> biases;
    Activation activation = Activation::Linear;

    double weight(std::size_t o, std::size_t i) const { return weights[o * in + i]; }
};

struct Mlp {
    std::vector<DenseLayer> layers;
    double l2_constant = 0.0;

    std::size_t input_size() const;
    std::size_t output_size() const;
    std::size_t parameter_count() const;

    // Throws ConfigError on inconsistent dimensions or a negative l2_constant.
    void validate() const;
};

// Forward-pass state reused across calls; also holds backward scratch.
struct ForwardCache {
    std::vector<std::vector<double>> activations;  // [0] = input, [k+1] = output of layer k
    std::vector<std::vector<double>> pre_activations;
    std::vector<std::vector<double>> deltas;
    bool valid = false;
};

// Batched forward state. Every buffer is feature-major: element (unit u,
// sample b) lives at [u * batch + b].
struct BatchCache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> pre_activations;
    std::vector<std::vector<double>> deltas;
    bool valid = false;
};

struct LayerGradient {
    std::vector<double> weights;
    std::vector<double> biases;
};

struct GradientSet {
    std::vector<LayerGradient> layers;

    double squared_norm() const;
    double global_norm() const;
    void set_zero();
    void scale(double factor);
};

struct AdamSettings {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    GradientSet first_moment;
    GradientSet second_moment;
    std::uint64_t step_count = 0;
    AdamSettings settings;

    static AdamState for_network(const Mlp& mlp, const AdamSettings& settings = {});
};

double apply_activation(Activation a, double z);

// Returns the final layer's activations. Throws ConfigError on a size mismatch.
std::vector<double> forward(const Mlp& mlp, std::span<const double> x);

// Allocation-free variant once the cache has been sized; the returned span
// aliases the cache.
std::span<const double> forward(const Mlp& mlp, std::span<const double> x, ForwardCache& cache);

// Forward pass over the rows of X listed in `rows` (all rows when empty).
// Returns the output block, feature-major [output_size x batch].
std::span<const double> forward_batch(const Mlp& mlp, const Matrix& X, std::span<const std::size_t> rows,
                                      BatchCache& cache);

// Applies `activation` elementwise through the active kernel table.
void activate(Activation a, const double* z, double* out, std::size_t n);

GradientSet zero_gradients(const Mlp& mlp);

// grads += weight * d(upstream . output)/d(params) for the input held in the cache.
// Throws UsageError when the cache does not hold a forward pass for this network.
void accumulate_gradients(const Mlp& mlp, std::span<const double> upstream, ForwardCache& cache,
                          GradientSet& grads, double weight = 1.0);

// Batched counterpart of accumulate_gradients: `upstream` is feature-major
// [output_size x batch] and grads += weight * sum over the batch.
void accumulate_gradients_batch(const Mlp& mlp, std::span<const double> upstream, BatchCache& cache,
                                GradientSet& grads, double weight = 1.0);

// grads += 2 * l2_constant * w for every weight (biases are not penalized).
void add_l2_gradient(const Mlp& mlp, GradientSet& grads);

// l2_constant * sum of squared weights.
double l2_penalty(const Mlp& mlp);

// Gradient of (upstream . output + l2 penalty) for a single cached input.
GradientSet backward(const Mlp& mlp, std::span<const double> upstream, ForwardCache& cache);

// Rescales so the global L2 norm is at most threshold. Throws ConfigError when
// threshold <= 0.
GradientSet clip_gradients(GradientSet grads, double threshold);

// Joint clipping across several gradient sets that are updated together.
// Returns the factor applied (1 when no clipping happened).
double clip_gradients_jointly(std::span<GradientSet* const> sets, double threshold);

void adam_step(Mlp& mlp, const GradientSet& grads, AdamState& state);

// Fan-in scaled uniform initialization, std = 1/sqrt(fan_in). layer_sizes
// includes the input width, activations has one entry per layer. All biases are
// zero except the final bias, which is set to output_bias_init when given.
Mlp init_network(std::span<const std::size_t> layer_sizes, std::span<const Activation> activations,
                 std::uint64_t seed, std::optional<double> output_bias_init = std::nullopt,
                 double l2_constant = 0.0);

}  // namespace mve
