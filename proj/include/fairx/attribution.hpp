#ifndef FAIRX_ATTRIBUTION_HPP
#define FAIRX_ATTRIBUTION_HPP

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairx/autodiff.hpp"
#include "fairx/data.hpp"
#include "fairx/model.hpp"

namespace fairx::attribution {

using autodiff::NodeId;
using autodiff::Tape;
using model::MlpParams;

/// Group-conditional baselines b_{y,g}, maintained by EMA during training and
/// treated as constants in every gradient computation.
struct BaselineState {
    std::size_t dim = 0;
    double gamma = 0.1;
    std::array<std::array<std::vector<double>, 2>, 2> b;      // b[y][g]
    std::array<std::array<long, 2>, 2> update_count{{{0, 0}, {0, 0}}};

    const std::vector<double>& baseline(int y, int g) const {
        return b[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)];
    }
    std::vector<double>& baseline(int y, int g) {
        return b[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)];
    }
};

/// Per-cell training-split means.  Throws if any (y,g) cell is empty.
inline BaselineState init_baselines(const data::Dataset& ds,
                                    const std::vector<std::size_t>& train_indices,
                                    double gamma = 0.1) {
    BaselineState st;
    st.dim = ds.p;
    st.gamma = gamma;
    std::array<std::array<std::size_t, 2>, 2> counts{{{0, 0}, {0, 0}}};
    for (int y = 0; y < 2; ++y)
        for (int g = 0; g < 2; ++g) st.baseline(y, g).assign(ds.p, 0.0);
    for (std::size_t i : train_indices) {
        auto& bv = st.baseline(ds.y[i], ds.a[i]);
        const double* x = ds.row(i);
        for (std::size_t j = 0; j < ds.p; ++j) bv[j] += x[j];
        counts[static_cast<std::size_t>(ds.y[i])][static_cast<std::size_t>(ds.a[i])]++;
    }
    for (int y = 0; y < 2; ++y)
        for (int g = 0; g < 2; ++g) {
            std::size_t c = counts[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)];
            if (c == 0)
                throw std::runtime_error("init_baselines: empty (y,g) cell (" +
                                         std::to_string(y) + "," + std::to_string(g) + ")");
            for (double& v : st.baseline(y, g)) v /= static_cast<double>(c);
        }
    return st;
}

/// EMA update b <- (1-gamma) b + gamma * batch-cell-mean; empty cells untouched.
inline void update_baselines(BaselineState& st, const data::Dataset& ds,
                             const std::vector<std::size_t>& batch, double gamma) {
    if (gamma <= 0.0 || gamma >= 1.0)
        throw std::invalid_argument("update_baselines: gamma must lie in (0,1)");
    std::array<std::array<std::vector<double>, 2>, 2> mean;
    std::array<std::array<std::size_t, 2>, 2> counts{{{0, 0}, {0, 0}}};
    for (int y = 0; y < 2; ++y)
        for (int g = 0; g < 2; ++g) mean[y][g].assign(st.dim, 0.0);
    for (std::size_t i : batch) {
        auto& m = mean[static_cast<std::size_t>(ds.y[i])][static_cast<std::size_t>(ds.a[i])];
        const double* x = ds.row(i);
        for (std::size_t j = 0; j < st.dim; ++j) m[j] += x[j];
        counts[static_cast<std::size_t>(ds.y[i])][static_cast<std::size_t>(ds.a[i])]++;
    }
    for (int y = 0; y < 2; ++y)
        for (int g = 0; g < 2; ++g) {
            std::size_t c = counts[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)];
            if (c == 0) continue;
            auto& bv = st.baseline(y, g);
            auto& m = mean[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)];
            for (std::size_t j = 0; j < st.dim; ++j)
                bv[j] = (1.0 - gamma) * bv[j] + gamma * (m[j] / static_cast<double>(c));
            st.update_count[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)]++;
        }
}

/// Reusable graph computing f and grad_x f for a fixed architecture, with the
/// model weights bound as parameter slots and the evaluation point as inputs.
struct LogitGradGraph {
    Tape tape;
    std::vector<NodeId> x_in;
    NodeId f_out = -1;
    std::vector<NodeId> grad_out;
    mutable std::vector<double> values;  // evaluation workspace

    static LogitGradGraph build(const std::vector<int>& layer_sizes, model::Activation act) {
        LogitGradGraph g;
        const std::size_t p = static_cast<std::size_t>(layer_sizes.front());
        for (std::size_t j = 0; j < p; ++j) g.x_in.push_back(g.tape.input());
        std::vector<NodeId> theta;
        for (std::size_t k = 0; k < model::param_count(layer_sizes); ++k)
            theta.push_back(g.tape.param());
        g.f_out = model::build_logit(g.tape, layer_sizes, act, g.x_in, theta);
        g.grad_out = autodiff::gradient(g.tape, g.f_out, g.x_in);
        return g;
    }

    /// Evaluates f and grad_x f at (x, theta); grad written into `grad`.
    double eval(std::span<const double> x, std::span<const double> theta,
                std::span<double> grad) const {
        autodiff::evaluate(tape, x, theta, values);
        for (std::size_t j = 0; j < grad_out.size(); ++j)
            grad[j] = values[static_cast<std::size_t>(grad_out[j])];
        return values[static_cast<std::size_t>(f_out)];
    }
};

/// Midpoint-rule Riemann IG:
/// (x - x') (*) (1/T) sum_{t=1..T} grad f(x' + ((t-1/2)/T)(x - x')).
/// The midpoint rule keeps the completeness residual O(1/T^2), which the
/// right-endpoint rule does not.
inline std::vector<double> integrated_gradients(const MlpParams& params,
                                                std::span<const double> x,
                                                std::span<const double> baseline, int T) {
    const std::size_t p = static_cast<std::size_t>(params.input_dim());
    if (x.size() != p || baseline.size() != p)
        throw std::invalid_argument("integrated_gradients: dimension mismatch");
    if (T < 1) throw std::invalid_argument("integrated_gradients: T must be >= 1");

    LogitGradGraph g = LogitGradGraph::build(params.layer_sizes, params.activation);
    std::vector<double> acc(p, 0.0), grad(p), z(p);
    for (int t = 1; t <= T; ++t) {
        double alpha = (static_cast<double>(t) - 0.5) / T;
        for (std::size_t j = 0; j < p; ++j) z[j] = baseline[j] + alpha * (x[j] - baseline[j]);
        g.eval(z, params.weights, grad);
        for (std::size_t j = 0; j < p; ++j) acc[j] += grad[j];
    }
    for (std::size_t j = 0; j < p; ++j) acc[j] = (x[j] - baseline[j]) * acc[j] / T;
    return acc;
}

/// sum_j IG_j - (f(x) - f(x')); shrinks with T by the completeness axiom.
inline double completeness_gap(const MlpParams& params, std::span<const double> x,
                               std::span<const double> baseline, int T) {
    std::vector<double> ig = integrated_gradients(params, x, baseline, T);
    double total = 0.0;
    for (double v : ig) total += v;
    return total - (model::logit(params, x) - model::logit(params, baseline));
}

inline double norm_q(std::span<const double> v, double q) {
    if (q == 2.0) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }
    if (q == 1.0) {
        double s = 0.0;
        for (double x : v) s += std::abs(x);
        return s;
    }
    throw std::invalid_argument("norm_q: only q=1 and q=2 are supported");
}

/// ig / (||ig||_q + eps); the zero vector maps to itself.
inline std::vector<double> normalize_attribution(std::span<const double> ig, double q,
                                                 double eps) {
    if (eps <= 0.0) throw std::invalid_argument("normalize_attribution: eps must be > 0");
    double denom = norm_q(ig, q) + eps;
    std::vector<double> out(ig.begin(), ig.end());
    for (double& v : out) v /= denom;
    return out;
}

/// V(x;y): Euclidean distance between the normalized IG vectors computed
/// against the two group baselines for label y.
inline double disparity(const MlpParams& params, std::span<const double> x, int y,
                        const BaselineState& state, int T, double q, double eps) {
    std::vector<double> n0 = normalize_attribution(
        integrated_gradients(params, x, state.baseline(y, 0), T), q, eps);
    std::vector<double> n1 = normalize_attribution(
        integrated_gradients(params, x, state.baseline(y, 1), T), q, eps);
    double s = 0.0;
    for (std::size_t j = 0; j < n0.size(); ++j) s += (n0[j] - n1[j]) * (n0[j] - n1[j]);
    return std::sqrt(s);
}

/// Symbolic disparity graph shared across instances: x and both baselines are
/// input slots, the model weights are parameter slots.  Baselines enter as
/// plain inputs so no gradient flows into them.  The optional theta-gradient
/// outputs support the training-time double-backprop path: dV/dtheta for one
/// instance, evaluated by rebinding (x, b0, b1, theta).
struct DisparityGraph {
    Tape tape;
    std::size_t p = 0;
    NodeId v_out = -1;
    std::vector<NodeId> dv_dtheta;  // empty unless built with_theta_grad
    mutable std::vector<double> values;
    mutable std::vector<double> binding;

    static DisparityGraph build(const std::vector<int>& layer_sizes, model::Activation act,
                                int T, double q, double eps, bool with_theta_grad) {
        if (T < 1) throw std::invalid_argument("DisparityGraph: T must be >= 1");
        if (q != 1.0 && q != 2.0)
            throw std::invalid_argument("DisparityGraph: only q=1 and q=2 are supported");

        DisparityGraph g;
        g.p = static_cast<std::size_t>(layer_sizes.front());
        Tape& t = g.tape;

        std::vector<NodeId> x(g.p), b0(g.p), b1(g.p);
        for (auto& id : x) id = t.input();
        for (auto& id : b0) id = t.input();
        for (auto& id : b1) id = t.input();
        std::vector<NodeId> theta;
        for (std::size_t k = 0; k < model::param_count(layer_sizes); ++k)
            theta.push_back(t.param());

        auto ig_for = [&](const std::vector<NodeId>& base) {
            std::vector<NodeId> diff(g.p);
            for (std::size_t j = 0; j < g.p; ++j) diff[j] = t.sub(x[j], base[j]);
            std::vector<std::vector<NodeId>> step_grads(g.p);
            std::vector<NodeId> z(g.p);
            for (int step = 1; step <= T; ++step) {
                NodeId alpha = t.constant((static_cast<double>(step) - 0.5) / T);
                for (std::size_t j = 0; j < g.p; ++j)
                    z[j] = t.add(base[j], t.mul(alpha, diff[j]));
                NodeId f = model::build_logit(t, layer_sizes, act, z, theta);
                std::vector<NodeId> grads = autodiff::gradient(t, f, z);
                for (std::size_t j = 0; j < g.p; ++j) step_grads[j].push_back(grads[j]);
            }
            NodeId inv_t = t.constant(1.0 / T);
            std::vector<NodeId> ig(g.p);
            for (std::size_t j = 0; j < g.p; ++j)
                ig[j] = t.mul(diff[j], t.mul(inv_t, t.sum(step_grads[j])));
            return ig;
        };

        auto normalize = [&](const std::vector<NodeId>& ig) {
            NodeId norm;
            if (q == 2.0) {
                std::vector<NodeId> sq(g.p);
                for (std::size_t j = 0; j < g.p; ++j) sq[j] = t.mul(ig[j], ig[j]);
                norm = t.sqrt(t.sum(sq));
            } else {
                std::vector<NodeId> ab(g.p);
                for (std::size_t j = 0; j < g.p; ++j) ab[j] = t.abs_smooth(ig[j]);
                norm = t.sum(ab);
            }
            NodeId denom = t.add(norm, t.constant(eps));
            std::vector<NodeId> out(g.p);
            for (std::size_t j = 0; j < g.p; ++j) out[j] = t.div(ig[j], denom);
            return out;
        };

        std::vector<NodeId> n0 = normalize(ig_for(b0));
        std::vector<NodeId> n1 = normalize(ig_for(b1));
        std::vector<NodeId> sq(g.p);
        for (std::size_t j = 0; j < g.p; ++j) {
            NodeId d = t.sub(n0[j], n1[j]);
            sq[j] = t.mul(d, d);
        }
        g.v_out = t.sqrt(t.sum(sq));

        if (with_theta_grad)
            g.dv_dtheta = autodiff::gradient(g.tape, g.v_out, g.tape.param_slots());
        return g;
    }

    /// Evaluates V (and dV/dtheta when built with it, accumulated scaled by
    /// `grad_scale` into `grad_accum`).
    double eval(std::span<const double> x, std::span<const double> b0,
                std::span<const double> b1, std::span<const double> theta,
                std::span<double> grad_accum = {}, double grad_scale = 1.0) const {
        binding.resize(3 * p);
        std::copy(x.begin(), x.end(), binding.begin());
        std::copy(b0.begin(), b0.end(), binding.begin() + static_cast<std::ptrdiff_t>(p));
        std::copy(b1.begin(), b1.end(), binding.begin() + static_cast<std::ptrdiff_t>(2 * p));
        autodiff::evaluate(tape, binding, theta, values);
        if (!grad_accum.empty()) {
            for (std::size_t k = 0; k < dv_dtheta.size(); ++k)
                grad_accum[k] += grad_scale * values[static_cast<std::size_t>(dv_dtheta[k])];
        }
        return values[static_cast<std::size_t>(v_out)];
    }
};

}  // namespace fairx::attribution

#endif  // FAIRX_ATTRIBUTION_HPP
