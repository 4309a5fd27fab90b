#ifndef FAIRX_TRAINING_HPP
#define FAIRX_TRAINING_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairx/attribution.hpp"
#include "fairx/autodiff.hpp"
#include "fairx/data.hpp"
#include "fairx/fairness.hpp"
#include "fairx/model.hpp"

namespace fairx::training {

using autodiff::NodeId;
using autodiff::Tape;

enum class PiMode { Algorithm1Sum, Empirical, Equal };

inline PiMode pi_mode_from_string(const std::string& s) {
    if (s == "algorithm1-sum") return PiMode::Algorithm1Sum;
    if (s == "empirical") return PiMode::Empirical;
    if (s == "equal") return PiMode::Equal;
    throw std::invalid_argument("unknown pi_mode: " + s);
}

inline std::string to_string(PiMode m) {
    switch (m) {
        case PiMode::Algorithm1Sum: return "algorithm1-sum";
        case PiMode::Empirical: return "empirical";
        case PiMode::Equal: return "equal";
    }
    return "algorithm1-sum";
}

struct TrainConfig {
    std::vector<int> hidden_sizes{64, 32};
    std::string activation = "tanh";
    std::string optimizer = "adam";   // adam | sgd
    double learning_rate = 1e-3;
    int epochs = 100;
    int batch_size = 128;
    int ig_steps = 16;
    double gamma = 0.1;
    double lambda_ig = 1.0;
    double lambda_fair = 1.0;
    double q = 2.0;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::string pi_mode = "algorithm1-sum";
    bool enable_pred = true;
    bool enable_gcig = true;
    bool enable_fair = true;
    double grad_clip = 0.0;  // 0 disables clipping

    void validate() const {
        if (lambda_ig < 0.0 || lambda_fair < 0.0)
            throw std::invalid_argument("config: lambda weights must be >= 0");
        if (ig_steps < 1) throw std::invalid_argument("config: ig_steps must be >= 1");
        if (gamma <= 0.0 || gamma >= 1.0)
            throw std::invalid_argument("config: gamma must lie in (0,1)");
        if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
        if (optimizer != "adam" && optimizer != "sgd")
            throw std::invalid_argument("config: optimizer must be adam or sgd");
        model::activation_from_string(activation);
        pi_mode_from_string(pi_mode);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["hidden_sizes"] = hidden_sizes;
        j["activation"] = activation;
        j["optimizer"] = optimizer;
        j["learning_rate"] = learning_rate;
        j["epochs"] = epochs;
        j["batch_size"] = batch_size;
        j["ig_steps"] = ig_steps;
        j["gamma"] = gamma;
        j["lambda_ig"] = lambda_ig;
        j["lambda_fair"] = lambda_fair;
        j["q"] = q;
        j["epsilon"] = epsilon;
        j["seed"] = seed;
        j["pi_mode"] = pi_mode;
        j["enable_pred"] = enable_pred;
        j["enable_gcig"] = enable_gcig;
        j["enable_fair"] = enable_fair;
        j["grad_clip"] = grad_clip;
        return j;
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (k == "hidden_sizes") c.hidden_sizes = it->get<std::vector<int>>();
            else if (k == "activation") c.activation = it->get<std::string>();
            else if (k == "optimizer") c.optimizer = it->get<std::string>();
            else if (k == "learning_rate") c.learning_rate = it->get<double>();
            else if (k == "epochs") c.epochs = it->get<int>();
            else if (k == "batch_size") c.batch_size = it->get<int>();
            else if (k == "ig_steps") c.ig_steps = it->get<int>();
            else if (k == "gamma") c.gamma = it->get<double>();
            else if (k == "lambda_ig") c.lambda_ig = it->get<double>();
            else if (k == "lambda_fair") c.lambda_fair = it->get<double>();
            else if (k == "q") c.q = it->get<double>();
            else if (k == "epsilon") c.epsilon = it->get<double>();
            else if (k == "seed") c.seed = it->get<std::uint64_t>();
            else if (k == "pi_mode") c.pi_mode = it->get<std::string>();
            else if (k == "enable_pred") c.enable_pred = it->get<bool>();
            else if (k == "enable_gcig") c.enable_gcig = it->get<bool>();
            else if (k == "enable_fair") c.enable_fair = it->get<bool>();
            else if (k == "grad_clip") c.grad_clip = it->get<double>();
            else throw std::invalid_argument("config: unknown key " + k);
        }
        c.validate();
        return c;
    }

    /// Applies a "key=value" override onto an existing key.
    void apply_override(const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must be key=value: " + kv);
        std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        nlohmann::json j = to_json();
        if (!j.contains(key)) throw std::invalid_argument("override: unknown config key " + key);
        if (j[key].is_string()) j[key] = value;
        else if (j[key].is_boolean()) j[key] = (value == "true" || value == "1");
        else if (j[key].is_array()) j[key] = nlohmann::json::parse(value);
        else j[key] = std::stod(value);
        *this = from_json(j);
    }

    std::vector<int> layer_sizes(std::size_t input_dim) const {
        std::vector<int> ls{static_cast<int>(input_dim)};
        ls.insert(ls.end(), hidden_sizes.begin(), hidden_sizes.end());
        ls.push_back(1);
        return ls;
    }

    /// FNV-1a over the canonical JSON form; stable across runs.
    std::uint64_t fingerprint() const {
        std::string s = to_json().dump();
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }
};

struct TrainHistory {
    std::vector<double> l_pred, l_gcig, l_fair, l_total, epoch_seconds;
};

struct TrainingDivergence : std::runtime_error {
    int epoch, batch;
    TrainingDivergence(int e, int b, const std::string& what)
        : std::runtime_error("training diverged at epoch " + std::to_string(e) + ", batch " +
                             std::to_string(b) + ": " + what),
          epoch(e), batch(b) {}
};

/// Mean BCE over the batch in the softplus form: mean_i softplus(z_i) - y_i z_i.
inline NodeId bce_loss(Tape& tape, std::span<const NodeId> logits, std::span<const int> y) {
    if (logits.empty()) throw std::invalid_argument("bce_loss: empty batch");
    if (logits.size() != y.size()) throw std::invalid_argument("bce_loss: length mismatch");
    std::vector<NodeId> terms;
    terms.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        NodeId sp = tape.softplus(logits[i]);
        terms.push_back(y[i] == 1 ? tape.sub(sp, logits[i]) : sp);
    }
    return tape.div(tape.sum(terms), tape.constant(static_cast<double>(terms.size())));
}

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Bias-corrected Adam update applied in place.
inline void adam_step(AdamState& st, std::vector<double>& params,
                      std::span<const double> grads, double lr) {
    if (grads.size() != params.size()) throw std::invalid_argument("adam_step: shape mismatch");
    if (st.m.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    for (double g : grads)
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
    st.t++;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        params[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + st.eps);
    }
}

struct TrainResult {
    model::MlpParams params;
    attribution::BaselineState baselines;
    TrainHistory history;
};

namespace detail {

inline std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27; x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace detail

/// FairX minibatch training: per batch, EMA-update the group baselines, then
/// minimize L_pred + lambda_ig L_GCIG + lambda_fair L_fair.  Disabled terms
/// build no graph, so the lambda=0 configuration is bitwise plain BCE training.
inline TrainResult fairx_train(const TrainConfig& cfg, const data::Dataset& ds,
                               const std::vector<std::size_t>& train_indices) {
    cfg.validate();
    const bool gcig_on = cfg.enable_gcig && cfg.lambda_ig > 0.0;
    const bool fair_on = cfg.enable_fair && cfg.lambda_fair > 0.0;
    const bool pred_on = cfg.enable_pred;
    const PiMode pi = pi_mode_from_string(cfg.pi_mode);
    const model::Activation act = model::activation_from_string(cfg.activation);

    TrainResult res;
    std::vector<int> layers = cfg.layer_sizes(ds.p);
    res.params = model::init_params(layers, act, cfg.seed);
    res.baselines = attribution::init_baselines(ds, train_indices, cfg.gamma);

    // Label frequencies on the training split (for pi_mode=empirical).
    double pi1 = 0.0;
    for (std::size_t i : train_indices) pi1 += ds.y[i];
    pi1 /= static_cast<double>(train_indices.size());
    auto label_weight = [&](int label) {
        switch (pi) {
            case PiMode::Algorithm1Sum: return 1.0;
            case PiMode::Equal: return 0.5;
            case PiMode::Empirical: return label == 1 ? pi1 : 1.0 - pi1;
        }
        return 1.0;
    };

    attribution::DisparityGraph dispar;
    if (gcig_on)
        dispar = attribution::DisparityGraph::build(layers, act, cfg.ig_steps, cfg.q,
                                                    cfg.epsilon, /*with_theta_grad=*/true);

    const std::size_t ntheta = res.params.weights.size();
    AdamState adam;
    std::vector<double> grad(ntheta), values, sgd_buf;
    Tape tape;

    std::array<std::array<bool, 2>, 2> cell_seen{};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto batches = data::minibatches(train_indices, static_cast<std::size_t>(cfg.batch_size),
                                         detail::epoch_seed(cfg.seed, epoch));
        double ep_pred = 0.0, ep_gcig = 0.0, ep_fair = 0.0, ep_total = 0.0;
        cell_seen = {};

        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch = batches[bi];
            attribution::update_baselines(res.baselines, ds, batch, cfg.gamma);
            for (std::size_t i : batch)
                cell_seen[static_cast<std::size_t>(ds.y[i])][static_cast<std::size_t>(ds.a[i])] =
                    true;

            double l_pred = 0.0, l_gcig = 0.0, l_fair = 0.0;
            std::fill(grad.begin(), grad.end(), 0.0);

            try {
                if (pred_on || fair_on) {
                    tape.clear();
                    std::vector<NodeId> theta;
                    theta.reserve(ntheta);
                    for (std::size_t k = 0; k < ntheta; ++k) theta.push_back(tape.param());

                    std::vector<NodeId> logits;
                    std::vector<int> by, ba;
                    logits.reserve(batch.size());
                    std::vector<NodeId> xn(ds.p);
                    for (std::size_t i : batch) {
                        const double* x = ds.row(i);
                        for (std::size_t j = 0; j < ds.p; ++j) xn[j] = tape.constant(x[j]);
                        logits.push_back(model::build_logit(tape, layers, act, xn, theta));
                        by.push_back(ds.y[i]);
                        ba.push_back(ds.a[i]);
                    }

                    NodeId loss = -1;
                    NodeId pred_node = -1, fair_node = -1;
                    if (pred_on) {
                        pred_node = bce_loss(tape, logits, by);
                        loss = pred_node;
                    }
                    if (fair_on) {
                        fair_node = fairness::soft_eo_loss(tape, logits, by, ba);
                        NodeId weighted = tape.mul(tape.constant(cfg.lambda_fair), fair_node);
                        loss = loss < 0 ? weighted : tape.add(loss, weighted);
                    }
                    auto grads = autodiff::gradient(tape, loss, tape.param_slots());
                    autodiff::evaluate(tape, {}, res.params.weights, values);
                    for (std::size_t k = 0; k < ntheta; ++k)
                        grad[k] += values[static_cast<std::size_t>(grads[k])];
                    if (pred_on) l_pred = values[static_cast<std::size_t>(pred_node)];
                    if (fair_on) l_fair = values[static_cast<std::size_t>(fair_node)];
                }

                if (gcig_on) {
                    std::array<std::vector<std::size_t>, 2> by_label;
                    for (std::size_t i : batch)
                        by_label[static_cast<std::size_t>(ds.y[i])].push_back(i);
                    for (int label = 0; label < 2; ++label) {
                        const auto& members = by_label[static_cast<std::size_t>(label)];
                        if (members.empty()) continue;
                        const double w = label_weight(label);
                        const double scale =
                            cfg.lambda_ig * w / static_cast<double>(members.size());
                        double vsum = 0.0;
                        for (std::size_t i : members)
                            vsum += dispar.eval(ds.x(i), res.baselines.baseline(label, 0),
                                                res.baselines.baseline(label, 1),
                                                res.params.weights, grad, scale);
                        l_gcig += w * vsum / static_cast<double>(members.size());
                    }
                }
            } catch (const std::runtime_error& e) {
                throw TrainingDivergence(epoch, static_cast<int>(bi), e.what());
            }

            double total = l_pred + cfg.lambda_ig * l_gcig + cfg.lambda_fair * l_fair;
            if (!std::isfinite(total))
                throw TrainingDivergence(epoch, static_cast<int>(bi), "non-finite loss");

            if (cfg.grad_clip > 0.0) {
                double nrm = 0.0;
                for (double g : grad) nrm += g * g;
                nrm = std::sqrt(nrm);
                if (nrm > cfg.grad_clip)
                    for (double& g : grad) g *= cfg.grad_clip / nrm;
            }

            if (cfg.optimizer == "adam") {
                adam_step(adam, res.params.weights, grad, cfg.learning_rate);
            } else {
                for (std::size_t k = 0; k < ntheta; ++k)
                    res.params.weights[k] -= cfg.learning_rate * grad[k];
            }

            ep_pred += l_pred;
            ep_gcig += l_gcig;
            ep_fair += l_fair;
            ep_total += total;
        }

        for (int y = 0; y < 2; ++y)
            for (int g = 0; g < 2; ++g)
                if (!cell_seen[static_cast<std::size_t>(y)][static_cast<std::size_t>(g)])
                    std::cerr << "warning: epoch " << epoch << " saw no instances in cell (y="
                              << y << ", a=" << g << ")\n";

        const double nb = static_cast<double>(batches.size());
        res.history.l_pred.push_back(ep_pred / nb);
        res.history.l_gcig.push_back(ep_gcig / nb);
        res.history.l_fair.push_back(ep_fair / nb);
        res.history.l_total.push_back(ep_total / nb);
        res.history.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return res;
}

}  // namespace fairx::training

#endif  // FAIRX_TRAINING_HPP
