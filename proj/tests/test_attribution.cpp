#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>

#include "fairx/attribution.hpp"

using namespace fairx;
using Catch::Approx;

namespace {

model::MlpParams linear_model(std::vector<double> w, double b) {
    model::MlpParams p;
    p.layer_sizes = {static_cast<int>(w.size()), 1};
    p.weights = std::move(w);
    p.weights.push_back(b);
    return p;
}

data::Dataset tiny_dataset() {
    // four instances, one per (y,a) cell
    data::Dataset ds;
    ds.n = 4;
    ds.p = 2;
    ds.X = {1.0, 3.0, 3.0, 5.0, -1.0, 0.0, 2.0, 2.0};
    ds.y = {0, 0, 1, 1};
    ds.a = {0, 1, 0, 1};
    return ds;
}

}  // namespace

TEST_CASE("integrated gradients is exact for linear models at any T") {
    auto p = linear_model({2.0, -1.0}, 0.73);
    for (int T : {1, 4, 33}) {
        auto ig = attribution::integrated_gradients(p, std::vector<double>{1.0, 1.0},
                                                    std::vector<double>{0.0, 0.0}, T);
        CHECK(ig[0] == Approx(2.0).margin(1e-12));
        CHECK(ig[1] == Approx(-1.0).margin(1e-12));
    }
}

TEST_CASE("IG of x against itself is zero") {
    auto p = model::init_params({3, 5, 1}, model::Activation::Tanh, 2);
    std::vector<double> x{0.4, -1.2, 2.0};
    auto ig = attribution::integrated_gradients(p, x, x, 8);
    for (double v : ig) CHECK(v == 0.0);
}

TEST_CASE("IG errors") {
    auto p = linear_model({1.0, 1.0}, 0.0);
    CHECK_THROWS_AS(attribution::integrated_gradients(p, std::vector<double>{1.0},
                                                      std::vector<double>{0.0, 0.0}, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(attribution::integrated_gradients(p, std::vector<double>{1.0, 0.0},
                                                      std::vector<double>{0.0, 0.0}, 0),
                    std::invalid_argument);
}

TEST_CASE("coarse IG approaches the high-resolution quadrature") {
    auto p = model::init_params({3, 8, 1}, model::Activation::Tanh, 13);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<double> x{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    auto fine = attribution::integrated_gradients(p, x, b, 4096);
    auto coarse = attribution::integrated_gradients(p, x, b, 16);
    double fine_norm = attribution::norm_q(fine, 2.0);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(fine[j] - coarse[j]) <= 1e-2 * std::max(fine_norm, 1.0));
}

TEST_CASE("completeness gap vanishes for linear models") {
    auto p = linear_model({1.5, -0.5, 2.0}, 0.2);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int T : {1, 16}) {
        std::vector<double> x{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
        CHECK(std::abs(attribution::completeness_gap(p, x, b, T)) < 1e-12);
    }
}

TEST_CASE("completeness gap small at T=256 and refined by larger T") {
    auto p = model::init_params({4, 8, 1}, model::Activation::Tanh, 31);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    int refined = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> x(4), b(4);
        for (auto& v : x) v = u(rng);
        for (auto& v : b) v = u(rng);
        double fx = model::logit(p, x), fb = model::logit(p, b);
        double g256 = attribution::completeness_gap(p, x, b, 256);
        double g16 = attribution::completeness_gap(p, x, b, 16);
        CHECK(std::abs(g256) <= 1e-3 * std::max(1.0, std::abs(fx - fb)));
        if (std::abs(g16) >= std::abs(g256)) ++refined;
    }
    CHECK(refined >= trials * 9 / 10);
}

TEST_CASE("baseline EMA update") {
    data::Dataset ds = tiny_dataset();
    attribution::BaselineState st;
    st.dim = 2;
    for (int y = 0; y < 2; ++y)
        for (int g = 0; g < 2; ++g) st.baseline(y, g).assign(2, 0.0);

    SECTION("single update matches the EMA equation") {
        attribution::update_baselines(st, ds, {0}, 0.1);  // cell (0,0) mean (1,3)
        CHECK(st.baseline(0, 0)[0] == Approx(0.1));
        CHECK(st.baseline(0, 0)[1] == Approx(0.3));
        CHECK(st.update_count[0][0] == 1);
    }
    SECTION("empty cells untouched") {
        attribution::update_baselines(st, ds, {0}, 0.1);
        CHECK(st.baseline(1, 1) == std::vector<double>{0.0, 0.0});
        CHECK(st.update_count[1][1] == 0);
    }
    SECTION("geometric convergence to a constant batch mean") {
        double prev = 1e9;
        for (int k = 0; k < 20; ++k) {
            attribution::update_baselines(st, ds, {0}, 0.25);
            double dist = std::abs(st.baseline(0, 0)[0] - 1.0);
            CHECK(dist < prev);
            if (k > 0) CHECK(dist == Approx(prev * 0.75).margin(1e-12));
            prev = dist;
        }
    }
    SECTION("gamma validation") {
        CHECK_THROWS_AS(attribution::update_baselines(st, ds, {0}, 1.0), std::invalid_argument);
    }
}

TEST_CASE("init_baselines computes per-cell means") {
    data::Dataset ds;
    ds.n = 5;
    ds.p = 2;
    ds.X = {1.0, 3.0, 3.0, 5.0, 0.0, 0.0, 1.0, 1.0, 4.0, 4.0};
    ds.y = {1, 1, 0, 0, 1};
    ds.a = {0, 0, 0, 1, 1};
    auto st = attribution::init_baselines(ds, {0, 1, 2, 3, 4});
    CHECK(st.baseline(1, 0) == std::vector<double>{2.0, 4.0});
    CHECK(st.baseline(0, 1) == std::vector<double>{1.0, 1.0});

    SECTION("disjoint cells") {
        ds.X[0] = 100.0;
        auto st2 = attribution::init_baselines(ds, {0, 1, 2, 3, 4});
        CHECK(st2.baseline(0, 1) == st.baseline(0, 1));
        CHECK(st2.baseline(1, 0) != st.baseline(1, 0));
    }
    SECTION("empty cell throws") {
        CHECK_THROWS_AS(attribution::init_baselines(ds, {0, 1, 2}), std::runtime_error);
    }
}

TEST_CASE("normalize_attribution") {
    auto n = attribution::normalize_attribution(std::vector<double>{3.0, 4.0}, 2.0, 1e-15);
    CHECK(n[0] == Approx(0.6));
    CHECK(n[1] == Approx(0.8));

    auto z = attribution::normalize_attribution(std::vector<double>{0.0, 0.0}, 2.0, 1e-8);
    CHECK(z == std::vector<double>{0.0, 0.0});

    // positive-scaling invariance up to epsilon slack
    std::vector<double> v{0.3, -0.7, 1.1};
    std::vector<double> v10{3.0, -7.0, 11.0};
    double eps = 1e-8;
    auto a = attribution::normalize_attribution(v, 2.0, eps);
    auto b = attribution::normalize_attribution(v10, 2.0, eps);
    double norm_v = attribution::norm_q(v, 2.0);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(a[j] - b[j]) <= 10.0 * eps / norm_v);

    CHECK_THROWS_AS(attribution::normalize_attribution(v, 2.0, 0.0), std::invalid_argument);
}

TEST_CASE("disparity of orthogonal unit attributions is sqrt(2)") {
    // Linear model w=(1,1); baselines chosen so the raw attributions are
    // (c,0) and (0,c), normalizing to (1,0) vs (0,1).
    auto p = linear_model({1.0, 1.0}, 0.0);
    attribution::BaselineState st;
    st.dim = 2;
    st.baseline(1, 0) = {0.0, 1.0};
    st.baseline(1, 1) = {1.0, 0.0};
    st.baseline(0, 0) = {0.0, 0.0};
    st.baseline(0, 1) = {0.0, 0.0};
    double v = attribution::disparity(p, std::vector<double>{1.0, 1.0}, 1, st, 8, 2.0, 1e-12);
    CHECK(v == Approx(std::sqrt(2.0)).margin(1e-9));
}

TEST_CASE("disparity is zero when the group baselines coincide") {
    auto p = model::init_params({2, 6, 1}, model::Activation::Tanh, 3);
    attribution::BaselineState st;
    st.dim = 2;
    st.baseline(0, 0) = st.baseline(0, 1) = {0.3, -0.4};
    st.baseline(1, 0) = st.baseline(1, 1) = {0.1, 0.2};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> x{u(rng), u(rng)};
        CHECK(attribution::disparity(p, x, trial % 2, st, 4, 2.0, 1e-8) == 0.0);
    }
}

TEST_CASE("linear model ignores baseline differences on zero-weight coordinates") {
    auto p = linear_model({2.0, 0.0, -1.0}, 0.5);
    attribution::BaselineState st;
    st.dim = 3;
    st.baseline(1, 0) = {0.1, -5.0, 0.3};
    st.baseline(1, 1) = {0.1, 7.0, 0.3};  // differs only where w_j = 0
    st.baseline(0, 0) = st.baseline(0, 1) = {0.0, 0.0, 0.0};
    double v = attribution::disparity(p, std::vector<double>{1.0, 2.0, 3.0}, 1, st, 16, 2.0,
                                      1e-12);
    CHECK(v == Approx(0.0).margin(1e-9));
}

TEST_CASE("disparity graph matches the numeric path and blocks baseline gradients") {
    auto p = model::init_params({2, 4, 1}, model::Activation::Tanh, 19);
    auto g = attribution::DisparityGraph::build(p.layer_sizes, p.activation, 8, 2.0, 1e-8,
                                                /*with_theta_grad=*/true);
    std::vector<double> x{0.7, -0.4}, b0{0.1, 0.5}, b1{-0.6, 0.2};
    attribution::BaselineState st;
    st.dim = 2;
    st.baseline(1, 0) = b0;
    st.baseline(1, 1) = b1;
    st.baseline(0, 0) = st.baseline(0, 1) = {0.0, 0.0};

    double v_num = attribution::disparity(p, x, 1, st, 8, 2.0, 1e-8);
    double v_sym = g.eval(x, b0, b1, p.weights);
    CHECK(v_sym == Approx(v_num).margin(1e-10));

    SECTION("theta gradient matches finite differences (double backprop)") {
        std::vector<double> grad(p.weights.size(), 0.0);
        g.eval(x, b0, b1, p.weights, grad);
        for (std::size_t k = 0; k < p.weights.size(); k += 3) {
            auto wp = p.weights;
            const double h = 1e-6;
            wp[k] += h;
            double fp = g.eval(x, b0, b1, wp);
            wp[k] -= 2 * h;
            double fm = g.eval(x, b0, b1, wp);
            double numeric = (fp - fm) / (2 * h);
            CHECK(grad[k] == Approx(numeric).margin(1e-5));
        }
    }

    SECTION("stop-gradient: baselines are inputs, not parameters") {
        // The parameter slot count equals the weight count; baseline entries
        // occupy input slots only, so d(anything)/d(baseline) never reaches
        // the theta gradient.
        CHECK(g.tape.param_count() == p.weights.size());
        CHECK(g.tape.input_count() == 3 * 2);
    }
}

TEST_CASE("stop-gradient: perturbing baselines does not change theta gradients beyond the x path") {
    // Compare dV/dtheta from the shared graph against a graph where the
    // baselines are constant-folded; identical results show no gradient can
    // flow through the baseline slots.
    auto p = model::init_params({2, 3, 1}, model::Activation::Tanh, 23);
    std::vector<double> x{0.4, 0.9}, b0{0.0, 0.1}, b1{0.5, -0.2};

    auto shared = attribution::DisparityGraph::build(p.layer_sizes, p.activation, 4, 2.0, 1e-8,
                                                     true);
    std::vector<double> grad_shared(p.weights.size(), 0.0);
    shared.eval(x, b0, b1, p.weights, grad_shared);

    // Constant-folded variant: rebuild with baselines baked in as constants.
    using autodiff::NodeId;
    autodiff::Tape t;
    std::vector<NodeId> xn;
    for (int j = 0; j < 2; ++j) xn.push_back(t.input());
    std::vector<NodeId> theta;
    for (std::size_t k = 0; k < p.weights.size(); ++k) theta.push_back(t.param());
    auto build_ig = [&](const std::vector<double>& base) {
        std::vector<NodeId> sumg(2, -1);
        std::vector<std::vector<NodeId>> per_step(2);
        for (int step = 1; step <= 4; ++step) {
            double alpha = (step - 0.5) / 4.0;
            std::vector<NodeId> z(2);
            for (int j = 0; j < 2; ++j)
                z[static_cast<std::size_t>(j)] =
                    t.add(t.constant(base[static_cast<std::size_t>(j)] * (1 - alpha)),
                          t.mul(t.constant(alpha), xn[static_cast<std::size_t>(j)]));
            NodeId f = model::build_logit(t, p.layer_sizes, p.activation, z, theta);
            auto gr = autodiff::gradient(t, f, z);
            for (int j = 0; j < 2; ++j) per_step[static_cast<std::size_t>(j)].push_back(
                gr[static_cast<std::size_t>(j)]);
        }
        std::vector<NodeId> ig(2);
        for (int j = 0; j < 2; ++j) {
            NodeId diff = t.sub(xn[static_cast<std::size_t>(j)],
                                t.constant(base[static_cast<std::size_t>(j)]));
            ig[static_cast<std::size_t>(j)] =
                t.mul(diff, t.mul(t.constant(0.25), t.sum(per_step[static_cast<std::size_t>(j)])));
        }
        return ig;
    };
    auto normalize = [&](std::vector<NodeId> ig) {
        std::vector<NodeId> sq;
        for (NodeId v : ig) sq.push_back(t.mul(v, v));
        NodeId denom = t.add(t.sqrt(t.sum(sq)), t.constant(1e-8));
        for (NodeId& v : ig) v = t.div(v, denom);
        return ig;
    };
    auto n0 = normalize(build_ig(b0));
    auto n1 = normalize(build_ig(b1));
    std::vector<NodeId> sq;
    for (int j = 0; j < 2; ++j) {
        NodeId d = t.sub(n0[static_cast<std::size_t>(j)], n1[static_cast<std::size_t>(j)]);
        sq.push_back(t.mul(d, d));
    }
    NodeId v_out = t.sqrt(t.sum(sq));
    auto grads = autodiff::gradient(t, v_out, t.param_slots());
    std::vector<double> values;
    autodiff::evaluate(t, x, p.weights, values);
    for (std::size_t k = 0; k < p.weights.size(); ++k)
        CHECK(grad_shared[k] ==
              Approx(values[static_cast<std::size_t>(grads[k])]).epsilon(1e-9).margin(1e-12));
}
