#ifndef FAIRX_EVAL_HPP
#define FAIRX_EVAL_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairx/attribution.hpp"
#include "fairx/data.hpp"
#include "fairx/fairness.hpp"
#include "fairx/model.hpp"
#include "fairx/training.hpp"

namespace fairx::eval {

namespace detail {

/// Runs body(i) for i in [0, count), on up to `threads` worker threads.  Each
/// index owns its output slot exclusively; the first exception is rethrown
/// after all workers join.
template <class F>
inline void parallel_for(std::size_t count, int threads, F&& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    std::size_t nworkers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    for (std::size_t w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// F1 = 2TP / (2TP + FP + FN); 0 when the denominator vanishes.
inline double f1_score(std::span<const int> predictions, std::span<const int> y) {
    if (predictions.empty() || predictions.size() != y.size())
        throw std::invalid_argument("f1_score: bad input lengths");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (predictions[i] == 1 && y[i] == 1) ++tp;
        else if (predictions[i] == 1 && y[i] == 0) ++fp;
        else if (predictions[i] == 0 && y[i] == 1) ++fn;
    }
    long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

/// Rank-based (Mann-Whitney) AUC with half-credit for ties.
inline double auc_score(std::span<const double> scores, std::span<const int> y) {
    if (scores.size() != y.size()) throw std::invalid_argument("auc_score: length mismatch");
    std::size_t npos = 0, nneg = 0;
    for (int v : y) (v == 1 ? npos : nneg)++;
    if (npos == 0 || nneg == 0)
        throw std::runtime_error("auc_score: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

    // Sum of positive-class average ranks (1-based, ties averaged).
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (y[order[k]] == 1) rank_sum += avg_rank;
        i = j + 1;
    }
    double u = rank_sum - static_cast<double>(npos) * (npos + 1) / 2.0;
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

/// Mean GCIG disparity over an evaluation split, using the frozen
/// training-time baselines.
inline double gcig_metric(const model::MlpParams& params,
                          const attribution::BaselineState& state, const data::Dataset& ds,
                          const std::vector<std::size_t>& indices, int T, double q, double eps) {
    if (indices.empty()) throw std::invalid_argument("gcig_metric: empty evaluation set");
    auto graph = attribution::DisparityGraph::build(params.layer_sizes, params.activation, T, q,
                                                    eps, /*with_theta_grad=*/false);
    double total = 0.0;
    for (std::size_t i : indices)
        total += graph.eval(ds.x(i), state.baseline(ds.y[i], 0), state.baseline(ds.y[i], 1),
                            params.weights);
    return total / static_cast<double>(indices.size());
}

struct RunMetrics {
    double f1 = 0.0;
    double auc = 0.0;
    double accuracy = 0.0;
    double eo_gap = 0.0;
    double gcig = 0.0;
    std::array<std::array<long, 2>, 2> cell_counts{{{0, 0}, {0, 0}}};
    std::uint64_t config_fingerprint = 0;
    int fold_id = -1;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["f1"] = f1;
        j["auc"] = auc;
        j["accuracy"] = accuracy;
        j["eo_gap"] = eo_gap;
        j["gcig"] = gcig;
        j["cell_counts"] = {{"y0_g0", cell_counts[0][0]}, {"y0_g1", cell_counts[0][1]},
                            {"y1_g0", cell_counts[1][0]}, {"y1_g1", cell_counts[1][1]}};
        j["config_fingerprint"] = config_fingerprint;
        j["fold_id"] = fold_id;
        j["seed"] = seed;
        return j;
    }
};

inline RunMetrics compute_metrics(const model::MlpParams& params,
                                  const attribution::BaselineState& state,
                                  const data::Dataset& ds,
                                  const std::vector<std::size_t>& indices,
                                  const training::TrainConfig& cfg) {
    RunMetrics m;
    m.config_fingerprint = cfg.fingerprint();
    m.seed = cfg.seed;

    std::vector<int> preds, yv, av;
    std::vector<double> scores;
    for (std::size_t i : indices) {
        double z = model::logit(params, ds.x(i));
        scores.push_back(model::sigmoid(z));
        preds.push_back(model::sigmoid(z) >= 0.5 ? 1 : 0);
        yv.push_back(ds.y[i]);
        av.push_back(ds.a[i]);
        m.cell_counts[static_cast<std::size_t>(ds.y[i])][static_cast<std::size_t>(ds.a[i])]++;
    }
    m.f1 = f1_score(preds, yv);
    m.auc = auc_score(scores, yv);
    long correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == yv[i];
    m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    m.eo_gap = fairness::eo_gap(preds, yv, av);
    m.gcig = gcig_metric(params, state, ds, indices, cfg.ig_steps, cfg.q, cfg.epsilon);
    return m;
}

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1) standard deviation
};

inline MetricSummary summarize(std::span<const double> v) {
    MetricSummary s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

struct CvSummary {
    std::vector<RunMetrics> folds;
    MetricSummary f1, auc, accuracy, eo_gap, gcig;
    std::vector<std::string> warnings;

    void finalize() {
        auto collect = [&](auto field) {
            std::vector<double> v;
            for (const auto& f : folds) v.push_back(field(f));
            return summarize(v);
        };
        f1 = collect([](const RunMetrics& m) { return m.f1; });
        auc = collect([](const RunMetrics& m) { return m.auc; });
        accuracy = collect([](const RunMetrics& m) { return m.accuracy; });
        eo_gap = collect([](const RunMetrics& m) { return m.eo_gap; });
        gcig = collect([](const RunMetrics& m) { return m.gcig; });
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        auto put = [&](const char* name, const MetricSummary& s) {
            j["summary"][name] = {{"mean", s.mean}, {"std", s.stddev}};
        };
        put("f1", f1);
        put("auc", auc);
        put("accuracy", accuracy);
        put("eo_gap", eo_gap);
        put("gcig", gcig);
        j["folds"] = nlohmann::ordered_json::array();
        for (const auto& f : folds) j["folds"].push_back(f.to_json());
        j["warnings"] = warnings;
        return j;
    }
};

/// k-fold cross validation: preprocessing is refit on each fold's training
/// indices, so test rows never leak into the fitted statistics.
inline CvSummary crossvalidate(const training::TrainConfig& cfg, const data::RawTable& raw,
                               const data::DatasetManifest& manifest, int k,
                               std::uint64_t seed, int threads = 1) {
    CvSummary cv;
    auto folds = data::kfold(raw.y, raw.a, k, seed);
    std::vector<std::optional<RunMetrics>> results(static_cast<std::size_t>(k));
    std::vector<std::string> fold_warnings(static_cast<std::size_t>(k));
    detail::parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t f) {
        try {
            const auto& fold = folds[f];
            data::Dataset ds = data::preprocess(raw, manifest, fold.train);
            training::TrainResult tr = training::fairx_train(cfg, ds, fold.train);
            RunMetrics m = compute_metrics(tr.params, tr.baselines, ds, fold.test, cfg);
            m.fold_id = static_cast<int>(f);
            results[f] = std::move(m);
        } catch (const std::exception& e) {
            fold_warnings[f] = "fold " + std::to_string(f) + " failed: " + e.what();
        }
    });
    for (std::size_t f = 0; f < results.size(); ++f) {
        if (results[f]) {
            cv.folds.push_back(*results[f]);
        } else {
            std::cerr << "warning: " << fold_warnings[f] << "\n";
            cv.warnings.push_back(fold_warnings[f]);
        }
    }
    cv.finalize();
    return cv;
}

struct AblationArm {
    std::string name;
    CvSummary cv;
    double gcig_pct_change = 0.0;  // vs prediction_only
};

/// Four-arm ablation: prediction_only, pred_eo, pred_gcig, full.  Only the
/// lambda weights differ between arms.
inline std::vector<AblationArm> ablation(const training::TrainConfig& base,
                                         const data::RawTable& raw,
                                         const data::DatasetManifest& manifest, int k,
                                         std::uint64_t seed, int threads = 1) {
    struct ArmSpec {
        const char* name;
        bool gcig, fair;
    };
    const ArmSpec arms[] = {{"prediction_only", false, false},
                            {"pred_eo", false, true},
                            {"pred_gcig", true, false},
                            {"full", true, true}};
    std::vector<AblationArm> out(4);
    detail::parallel_for(4, threads, [&](std::size_t i) {
        const auto& spec = arms[i];
        training::TrainConfig cfg = base;
        if (!spec.gcig) cfg.lambda_ig = 0.0;
        if (!spec.fair) cfg.lambda_fair = 0.0;
        out[i].name = spec.name;
        out[i].cv = crossvalidate(cfg, raw, manifest, k, seed);
    });
    const double base_gcig = out[0].cv.gcig.mean;
    for (auto& arm : out)
        arm.gcig_pct_change =
            base_gcig != 0.0 ? (arm.cv.gcig.mean - base_gcig) / base_gcig * 100.0 : 0.0;
    return out;
}

struct SweepPoint {
    std::string axis;
    double lambda = 0.0;
    CvSummary cv;
};

inline const std::vector<double>& default_sweep_values() {
    static const std::vector<double> v{0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
    return v;
}

/// Cross-validated run per grid point; the non-swept lambda is held at 1.0.
inline std::vector<SweepPoint> sensitivity_sweep(const training::TrainConfig& base,
                                                 const data::RawTable& raw,
                                                 const data::DatasetManifest& manifest,
                                                 const std::string& axis,
                                                 std::vector<double> values, int k,
                                                 std::uint64_t seed, int threads = 1) {
    if (axis != "lambda_ig" && axis != "lambda_fair")
        throw std::invalid_argument("sensitivity_sweep: axis must be lambda_ig or lambda_fair");
    if (values.empty()) values = default_sweep_values();
    std::vector<SweepPoint> grid(values.size());
    detail::parallel_for(values.size(), threads, [&](std::size_t i) {
        training::TrainConfig cfg = base;
        if (axis == "lambda_ig") {
            cfg.lambda_ig = values[i];
            cfg.lambda_fair = 1.0;
        } else {
            cfg.lambda_fair = values[i];
            cfg.lambda_ig = 1.0;
        }
        grid[i].axis = axis;
        grid[i].lambda = values[i];
        grid[i].cv = crossvalidate(cfg, raw, manifest, k, seed);
    });
    return grid;
}

// ---------------------------------------------------------------------------
// Correlation machinery

namespace detail {

// Regularized incomplete beta I_x(a,b) via the continued-fraction expansion.
inline double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double tiny = 1e-300, eps = 1e-14;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lnb = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log(1.0 - x);
    double front = std::exp(lnb);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::runtime_error("pearson: constant input, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

struct Correlation {
    double r = 0.0;       // Pearson
    double rho = 0.0;     // Spearman (Pearson on average ranks)
    double p_value = 1.0; // two-sided, from the t-transform of r
    std::size_t n = 0;
};

inline Correlation correlate(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("correlate: length mismatch");
    if (x.size() < 3) throw std::invalid_argument("correlate: need n >= 3");
    Correlation c;
    c.n = x.size();
    c.r = detail::pearson(x, y);
    auto rx = detail::average_ranks(x);
    auto ry = detail::average_ranks(y);
    c.rho = detail::pearson(rx, ry);

    const double nu = static_cast<double>(c.n - 2);
    if (std::abs(c.r) >= 1.0) {
        c.p_value = 0.0;
    } else {
        double t = c.r * std::sqrt(nu / (1.0 - c.r * c.r));
        // P(|T| > t) for Student-t with nu dof, via the incomplete beta.
        c.p_value = detail::incbeta(nu / 2.0, 0.5, nu / (nu + t * t));
    }
    return c;
}

/// Simple OLS r^2 (equals Pearson r squared for one regressor).
inline double regress_r2(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3)
        throw std::invalid_argument("regress_r2: need equal lengths with n >= 3");
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::runtime_error("regress_r2: constant x");
    if (syy == 0.0) return 1.0;  // fitted line reproduces constant y exactly
    double beta = sxy / sxx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double e = (y[i] - my) - beta * (x[i] - mx);
        ss_res += e * e;
    }
    return 1.0 - ss_res / syy;
}

/// Partial correlation of x and y controlling for z, as correlation of the
/// OLS residuals of x~z and y~z.
inline Correlation partial_correlation(std::span<const double> x, std::span<const double> y,
                                       std::span<const double> z) {
    if (x.size() != y.size() || y.size() != z.size())
        throw std::invalid_argument("partial_correlation: length mismatch");
    auto residual = [&](std::span<const double> v) {
        const double n = static_cast<double>(v.size());
        double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double mz = std::accumulate(z.begin(), z.end(), 0.0) / n;
        double svz = 0.0, szz = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            svz += (v[i] - mv) * (z[i] - mz);
            szz += (z[i] - mz) * (z[i] - mz);
        }
        double beta = szz == 0.0 ? 0.0 : svz / szz;
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) r[i] = (v[i] - mv) - beta * (z[i] - mz);
        return r;
    };
    auto rx = residual(x);
    auto ry = residual(y);
    return correlate(rx, ry);
}

}  // namespace fairx::eval

#endif  // FAIRX_EVAL_HPP
