#ifndef FAIRX_MODEL_HPP
#define FAIRX_MODEL_HPP

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairx/autodiff.hpp"

namespace fairx::model {

using autodiff::NodeId;
using autodiff::Tape;

enum class Activation { Tanh, Sigmoid, Softplus };

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softplus") return Activation::Softplus;
    throw std::invalid_argument("unknown activation: " + s +
                                " (expected tanh, sigmoid, or softplus)");
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softplus: return "softplus";
    }
    return "tanh";
}

/// Feed-forward binary classifier emitting a single pre-sigmoid logit.
/// Weight layout: for each layer, the (out x in) weight matrix row-major,
/// followed by the `out` biases.
struct MlpParams {
    std::vector<int> layer_sizes;  // [input, hidden..., 1]
    Activation activation = Activation::Tanh;
    std::vector<double> weights;
    std::uint64_t seed = 0;

    int input_dim() const { return layer_sizes.front(); }
};

inline std::size_t param_count(const std::vector<int>& layer_sizes) {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        total += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] +
                 static_cast<std::size_t>(layer_sizes[l + 1]);
    return total;
}

/// Glorot-uniform weights, zero biases, reproducible per seed.
inline MlpParams init_params(const std::vector<int>& layer_sizes, Activation activation,
                             std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("init_params: need at least input and output layers");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("init_params: layer sizes must be positive");
    if (layer_sizes.back() != 1)
        throw std::invalid_argument("init_params: final layer must output one logit");

    MlpParams p;
    p.layer_sizes = layer_sizes;
    p.activation = activation;
    p.seed = seed;
    p.weights.reserve(param_count(layer_sizes));

    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double s = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-s, s);
        for (int i = 0; i < fan_out * fan_in; ++i) p.weights.push_back(u(rng));
        for (int i = 0; i < fan_out; ++i) p.weights.push_back(0.0);
    }
    return p;
}

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid:
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        case Activation::Softplus:
            return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return x;
}

/// Numeric forward pass.  Accumulation order matches build_logit() so the two
/// paths produce bitwise-identical logits.
inline double logit(const MlpParams& p, std::span<const double> x) {
    if (static_cast<int>(x.size()) != p.input_dim())
        throw std::invalid_argument("logit: input has dimension " + std::to_string(x.size()) +
                                    ", model expects " + std::to_string(p.input_dim()));
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    std::size_t w = 0;
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const int in = p.layer_sizes[l];
        const int out = p.layer_sizes[l + 1];
        const bool last = l + 2 == p.layer_sizes.size();
        next.assign(static_cast<std::size_t>(out), 0.0);
        const std::size_t bias_base = w + static_cast<std::size_t>(out) * in;
        for (int i = 0; i < out; ++i) {
            double acc = 0.0;
            const double* row = &p.weights[w + static_cast<std::size_t>(i) * in];
            for (int j = 0; j < in; ++j) acc += row[j] * cur[static_cast<std::size_t>(j)];
            acc += p.weights[bias_base + static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(i)] = last ? acc : apply_activation(p.activation, acc);
        }
        w = bias_base + static_cast<std::size_t>(out);
        cur.swap(next);
    }
    return cur[0];
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// 1 iff sigmoid(logit) >= threshold (boundary inclusive).
inline int predict(const MlpParams& p, std::span<const double> x, double threshold = 0.5) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("predict: threshold must lie in (0,1)");
    return sigmoid(logit(p, x)) >= threshold ? 1 : 0;
}

/// Emits the forward graph onto `tape` given node ids for the input features
/// and for every weight (same layout as MlpParams::weights).  Returns the
/// logit node.
inline NodeId build_logit(Tape& tape, const std::vector<int>& layer_sizes, Activation activation,
                          std::span<const NodeId> x_nodes, std::span<const NodeId> theta_nodes) {
    if (x_nodes.size() != static_cast<std::size_t>(layer_sizes.front()))
        throw std::invalid_argument("build_logit: input node count mismatch");
    if (theta_nodes.size() != param_count(layer_sizes))
        throw std::invalid_argument("build_logit: parameter node count mismatch");

    std::vector<NodeId> cur(x_nodes.begin(), x_nodes.end());
    std::vector<NodeId> next;
    std::vector<NodeId> terms;
    std::size_t w = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int in = layer_sizes[l];
        const int out = layer_sizes[l + 1];
        const bool last = l + 2 == layer_sizes.size();
        const std::size_t bias_base = w + static_cast<std::size_t>(out) * in;
        next.clear();
        for (int i = 0; i < out; ++i) {
            terms.clear();
            for (int j = 0; j < in; ++j)
                terms.push_back(tape.mul(theta_nodes[w + static_cast<std::size_t>(i) * in + j],
                                         cur[static_cast<std::size_t>(j)]));
            terms.push_back(theta_nodes[bias_base + static_cast<std::size_t>(i)]);
            NodeId pre = tape.sum(terms);
            if (last) {
                next.push_back(pre);
            } else {
                switch (activation) {
                    case Activation::Tanh: next.push_back(tape.tanh(pre)); break;
                    case Activation::Sigmoid: next.push_back(tape.sigmoid(pre)); break;
                    case Activation::Softplus: next.push_back(tape.softplus(pre)); break;
                }
            }
        }
        w = bias_base + static_cast<std::size_t>(out);
        cur.swap(next);
    }
    return cur[0];
}

}  // namespace fairx::model

#endif  // FAIRX_MODEL_HPP
