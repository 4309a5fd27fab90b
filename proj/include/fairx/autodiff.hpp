#ifndef FAIRX_AUTODIFF_HPP
#define FAIRX_AUTODIFF_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairx::autodiff {

/// Scalar computation graph with reverse-mode differentiation implemented as a
/// graph transform: gradient() appends new nodes whose evaluation yields the
/// derivatives, so gradients of gradients are ordinary graphs as well.

enum class Op : std::uint8_t {
    Const,
    Input,
    Param,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Sigmoid,
    Softplus,
    Log,
    Exp,
    AbsSmooth,  // sqrt(x^2 + delta^2), delta in aux
    Sqrt,
    Pow,        // x^c, exponent c in aux
    Sum         // variable arity, operands in the argument pool
};

using NodeId = std::int32_t;

struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double aux = 0.0;
};

class Tape {
public:
    NodeId constant(double v) { return push({Op::Const, -1, -1, v}); }

    NodeId input() {
        NodeId id = push({Op::Input, static_cast<NodeId>(inputs_.size()), -1, 0.0});
        inputs_.push_back(id);
        return id;
    }

    NodeId param() {
        NodeId id = push({Op::Param, static_cast<NodeId>(params_.size()), -1, 0.0});
        params_.push_back(id);
        return id;
    }

    NodeId add(NodeId x, NodeId y) { return push({Op::Add, x, y, 0.0}); }
    NodeId sub(NodeId x, NodeId y) { return push({Op::Sub, x, y, 0.0}); }
    NodeId mul(NodeId x, NodeId y) { return push({Op::Mul, x, y, 0.0}); }
    NodeId div(NodeId x, NodeId y) { return push({Op::Div, x, y, 0.0}); }
    NodeId neg(NodeId x) { return push({Op::Neg, x, -1, 0.0}); }
    NodeId tanh(NodeId x) { return push({Op::Tanh, x, -1, 0.0}); }
    NodeId sigmoid(NodeId x) { return push({Op::Sigmoid, x, -1, 0.0}); }
    NodeId softplus(NodeId x) { return push({Op::Softplus, x, -1, 0.0}); }
    NodeId log(NodeId x) { return push({Op::Log, x, -1, 0.0}); }
    NodeId exp(NodeId x) { return push({Op::Exp, x, -1, 0.0}); }
    NodeId abs_smooth(NodeId x, double delta = 1e-6) { return push({Op::AbsSmooth, x, -1, delta}); }
    NodeId sqrt(NodeId x) { return push({Op::Sqrt, x, -1, 0.0}); }
    NodeId pow(NodeId x, double c) { return push({Op::Pow, x, -1, c}); }

    NodeId sum(std::span<const NodeId> terms) {
        Node n{Op::Sum, static_cast<NodeId>(sum_args_.size()),
               static_cast<NodeId>(terms.size()), 0.0};
        sum_args_.insert(sum_args_.end(), terms.begin(), terms.end());
        return push(n);
    }

    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }
    std::size_t input_count() const { return inputs_.size(); }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<NodeId>& input_slots() const { return inputs_; }
    const std::vector<NodeId>& param_slots() const { return params_; }
    const std::vector<NodeId>& sum_args() const { return sum_args_; }

    void clear() {
        nodes_.clear();
        sum_args_.clear();
        inputs_.clear();
        params_.clear();
    }

private:
    NodeId push(Node n) {
        nodes_.push_back(n);
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<NodeId> sum_args_;  // operand pool for Sum nodes
    std::vector<NodeId> inputs_;
    std::vector<NodeId> params_;
};

/// Evaluates every node of the tape in topological (creation) order.
/// `values` is resized to tape.size(); values[id] is the cached value of node id.
/// Throws on binding-size mismatch and on the first non-finite intermediate.
inline void evaluate(const Tape& tape, std::span<const double> inputs,
                     std::span<const double> params, std::vector<double>& values) {
    if (inputs.size() != tape.input_count())
        throw std::invalid_argument("evaluate: expected " + std::to_string(tape.input_count()) +
                                    " input values, got " + std::to_string(inputs.size()));
    if (params.size() != tape.param_count())
        throw std::invalid_argument("evaluate: expected " + std::to_string(tape.param_count()) +
                                    " parameter values, got " + std::to_string(params.size()));

    const std::size_t n = tape.size();
    values.resize(n);
    double* v = values.data();
    const std::vector<NodeId>& pool = tape.sum_args();

    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = tape.node(static_cast<NodeId>(i));
        double out;
        switch (nd.op) {
            case Op::Const: out = nd.aux; break;
            case Op::Input: out = inputs[static_cast<std::size_t>(nd.a)]; break;
            case Op::Param: out = params[static_cast<std::size_t>(nd.a)]; break;
            case Op::Add: out = v[nd.a] + v[nd.b]; break;
            case Op::Sub: out = v[nd.a] - v[nd.b]; break;
            case Op::Mul: out = v[nd.a] * v[nd.b]; break;
            case Op::Div: out = v[nd.a] / v[nd.b]; break;
            case Op::Neg: out = -v[nd.a]; break;
            case Op::Tanh: out = std::tanh(v[nd.a]); break;
            case Op::Sigmoid: {
                double x = v[nd.a];
                out = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
                break;
            }
            case Op::Softplus: {
                // log(1 + e^x) in overflow-safe form
                double x = v[nd.a];
                out = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
                break;
            }
            case Op::Log: out = std::log(v[nd.a]); break;
            case Op::Exp: out = std::exp(v[nd.a]); break;
            case Op::AbsSmooth: {
                double x = v[nd.a];
                out = std::sqrt(x * x + nd.aux * nd.aux);
                break;
            }
            case Op::Sqrt: out = std::sqrt(v[nd.a]); break;
            case Op::Pow: out = std::pow(v[nd.a], nd.aux); break;
            case Op::Sum: {
                double acc = 0.0;
                const NodeId* args = pool.data() + nd.a;
                for (NodeId k = 0; k < nd.b; ++k) acc += v[args[k]];
                out = acc;
                break;
            }
            default: throw std::logic_error("evaluate: unknown op");
        }
        if (!std::isfinite(out))
            throw std::runtime_error("evaluate: non-finite value at node " + std::to_string(i));
        v[i] = out;
    }
}

inline double evaluate_output(const Tape& tape, NodeId output, std::span<const double> inputs,
                              std::span<const double> params) {
    std::vector<double> values;
    evaluate(tape, inputs, params, values);
    return values[static_cast<std::size_t>(output)];
}

/// Appends to `tape` a subgraph computing d(output)/d(node) for every node in
/// `wrt`, and returns the ids of those derivative nodes.  The appended subgraph
/// is built from ordinary ops, so it can itself be differentiated again.
inline std::vector<NodeId> gradient(Tape& tape, NodeId output, std::span<const NodeId> wrt) {
    const std::size_t n0 = tape.size();
    if (output < 0 || static_cast<std::size_t>(output) >= n0)
        throw std::invalid_argument("gradient: output node out of range");
    for (NodeId w : wrt)
        if (w < 0 || static_cast<std::size_t>(w) >= n0)
            throw std::invalid_argument("gradient: wrt node not present in graph");

    // adj[i] is the node id of d(output)/d(node i); -1 means structurally zero.
    std::vector<NodeId> adj(n0, -1);
    adj[static_cast<std::size_t>(output)] = tape.constant(1.0);

    auto accumulate = [&](NodeId target, NodeId g) {
        auto& slot = adj[static_cast<std::size_t>(target)];
        slot = slot < 0 ? g : tape.add(slot, g);
    };

    // Snapshot of the sum pool; gradient of Sum reads operands recorded before
    // the transform started.
    for (NodeId i = output; i >= 0; --i) {
        NodeId g = adj[static_cast<std::size_t>(i)];
        if (g < 0) continue;
        const Node nd = tape.node(i);
        switch (nd.op) {
            case Op::Const:
            case Op::Input:
            case Op::Param:
                break;
            case Op::Add:
                accumulate(nd.a, g);
                accumulate(nd.b, g);
                break;
            case Op::Sub:
                accumulate(nd.a, g);
                accumulate(nd.b, tape.neg(g));
                break;
            case Op::Mul:
                accumulate(nd.a, tape.mul(g, nd.b));
                accumulate(nd.b, tape.mul(g, nd.a));
                break;
            case Op::Div:
                // y = a/b: dy/da = 1/b, dy/db = -y/b
                accumulate(nd.a, tape.div(g, nd.b));
                accumulate(nd.b, tape.neg(tape.div(tape.mul(g, i), nd.b)));
                break;
            case Op::Neg:
                accumulate(nd.a, tape.neg(g));
                break;
            case Op::Tanh:
                // dy/dx = 1 - y^2
                accumulate(nd.a, tape.mul(g, tape.sub(tape.constant(1.0), tape.mul(i, i))));
                break;
            case Op::Sigmoid:
                // dy/dx = y(1 - y)
                accumulate(nd.a, tape.mul(g, tape.mul(i, tape.sub(tape.constant(1.0), i))));
                break;
            case Op::Softplus:
                accumulate(nd.a, tape.mul(g, tape.sigmoid(nd.a)));
                break;
            case Op::Log:
                accumulate(nd.a, tape.div(g, nd.a));
                break;
            case Op::Exp:
                accumulate(nd.a, tape.mul(g, i));
                break;
            case Op::AbsSmooth:
                // dy/dx = x / y
                accumulate(nd.a, tape.mul(g, tape.div(nd.a, i)));
                break;
            case Op::Sqrt:
                // dy/dx = 1 / (2y)
                accumulate(nd.a, tape.div(g, tape.mul(tape.constant(2.0), i)));
                break;
            case Op::Pow:
                accumulate(nd.a, tape.mul(g, tape.mul(tape.constant(nd.aux),
                                                      tape.pow(nd.a, nd.aux - 1.0))));
                break;
            case Op::Sum: {
                for (NodeId k = 0; k < nd.b; ++k)
                    accumulate(tape.sum_args()[static_cast<std::size_t>(nd.a + k)], g);
                break;
            }
        }
    }

    std::vector<NodeId> grads;
    grads.reserve(wrt.size());
    for (NodeId w : wrt) {
        NodeId gid = adj[static_cast<std::size_t>(w)];
        grads.push_back(gid < 0 ? tape.constant(0.0) : gid);
    }
    return grads;
}

struct GradCheckEntry {
    std::size_t slot;       // index into the combined (inputs, params) binding
    bool is_param;
    double analytic;
    double numeric;
    double rel_error;
    bool ok;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    bool all_ok = true;
};

/// Compares reverse-mode derivatives of `output` against central finite
/// differences over every input and parameter slot.  Report-only.
inline GradCheckReport check_gradient(const Tape& tape, NodeId output,
                                      std::vector<double> inputs, std::vector<double> params,
                                      double step, double tolerance) {
    if (step <= 0.0) throw std::invalid_argument("check_gradient: step must be > 0");

    Tape work = tape;
    std::vector<NodeId> wrt;
    for (NodeId id : work.input_slots()) wrt.push_back(id);
    for (NodeId id : work.param_slots()) wrt.push_back(id);
    std::vector<NodeId> grads = gradient(work, output, wrt);

    std::vector<double> values;
    evaluate(work, inputs, params, values);

    GradCheckReport report;
    const std::size_t ni = inputs.size();
    for (std::size_t s = 0; s < wrt.size(); ++s) {
        const bool is_param = s >= ni;
        double& slot_value = is_param ? params[s - ni] : inputs[s];
        const double saved = slot_value;

        slot_value = saved + step;
        double fp = evaluate_output(tape, output, inputs, params);
        slot_value = saved - step;
        double fm = evaluate_output(tape, output, inputs, params);
        slot_value = saved;

        double numeric = (fp - fm) / (2.0 * step);
        double analytic = values[static_cast<std::size_t>(grads[s])];
        double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        double rel = std::abs(analytic - numeric) / denom;

        GradCheckEntry e{is_param ? s - ni : s, is_param, analytic, numeric, rel,
                         rel <= tolerance};
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.all_ok = report.all_ok && e.ok;
        report.entries.push_back(e);
    }
    return report;
}

}  // namespace fairx::autodiff

#endif  // FAIRX_AUTODIFF_HPP
