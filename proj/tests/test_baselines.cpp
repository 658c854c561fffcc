#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ictx/baselines.hpp"

using namespace ictx;

namespace {

double value_at(const LossCurve& curve, int t) {
    for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve.context_lens[i] == t) return curve.values[i];
    throw std::runtime_error("context length not in curve");
}

}  // namespace

TEST_CASE("bigram loss on a deterministic cycle shrinks with context") {
    StochasticMatrix m;
    m.n = 3;
    m.rows = {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    const Trajectory chain = simulate_markov_chain(m, 300, 1, 1);
    const LossCurve curve = bigram_loss_curve(chain, m);
    CHECK(value_at(curve, 100) < value_at(curve, 5));
    CHECK(value_at(curve, 299) < value_at(curve, 100));
    CHECK(value_at(curve, 299) < 0.01);  // smoothing-only residual
}

TEST_CASE("bigram beats unigram in the tail") {
    const StochasticMatrix m = sample_markov_matrix(4, 11);
    const Trajectory chain = simulate_markov_chain(m, 2000, 11);
    const LossCurve bigram = bigram_loss_curve(chain, m);
    const LossCurve unigram = unigram_loss_curve(chain, m);
    CHECK(value_at(bigram, 1999) < value_at(unigram, 1999));
    // unigram plateaus: its tail stays within a constant band
    CHECK(value_at(unigram, 1999) > 0.5 * value_at(unigram, 500));
}

TEST_CASE("averaged bigram loss decays by an order of magnitude") {
    std::vector<LossCurve> curves;
    for (int seed = 1; seed <= 10; ++seed) {
        const StochasticMatrix m = sample_markov_matrix(4, seed);
        const Trajectory chain = simulate_markov_chain(m, 1000, seed);
        curves.push_back(bigram_loss_curve(chain, m));
    }
    const LossCurve avg = average_curves(curves);
    CHECK(value_at(avg, 1000) * 10.0 <= value_at(avg, 10));
}

TEST_CASE("linear AR1 recovers exact linear dynamics") {
    std::vector<double> data = {0.0};
    for (int i = 0; i < 50; ++i) data.push_back(0.5 * data.back() + 1.0);
    const GaussianPredictor pred = fit_ar1_linear(data);
    CHECK(pred.mean_fn(0.8) == Catch::Approx(0.5 * 0.8 + 1.0).margin(1e-9));
    CHECK(pred.std_fn(0.8) == Catch::Approx(kSigmaFloor).margin(1e-9));
}

TEST_CASE("linear AR1 on i.i.d. noise finds no signal") {
    Rng rng(4);
    std::vector<double> data;
    for (int i = 0; i < 5000; ++i) data.push_back(rng.normal());
    const GaussianPredictor pred = fit_ar1_linear(data);
    // slope a ~ 0: predictions barely depend on x
    CHECK(std::abs(pred.mean_fn(1.0) - pred.mean_fn(-1.0)) < 0.1);
    CHECK(pred.std_fn(0.0) == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("degenerate input variance is rejected") {
    CHECK_THROWS_AS(fit_ar1_linear({1.0, 1.0, 1.0, 1.0}), numerical_error);
    CHECK_THROWS_AS(fit_ar1_linear({1.0, 2.0}), param_error);
}

TEST_CASE("network fits a constant series tightly") {
    std::vector<double> data(60, 0.42);
    Ar1NetConfig cfg;
    cfg.hidden_widths = {8, 4};
    cfg.max_epochs = 1500;
    const Ar1Net net = train_ar1_net(data, cfg, 1);
    const auto [mu, sigma] = net.predict(0.42);
    CHECK(std::abs(mu - 0.42) < 0.01);
    CHECK(sigma < 0.02);
}

TEST_CASE("training is deterministic in the seed") {
    Rng rng(6);
    std::vector<double> data;
    data.push_back(0.5);
    for (int i = 0; i < 80; ++i)
        data.push_back(logistic_f(3.9, data.back()) + 0.002 * rng.normal());
    Ar1NetConfig cfg;
    cfg.hidden_widths = {8, 4};
    cfg.max_epochs = 300;
    const Ar1Net a = train_ar1_net(data, cfg, 7);
    const Ar1Net b = train_ar1_net(data, cfg, 7);
    CHECK(a.parameters() == b.parameters());
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(13);
    std::vector<double> series;
    for (int i = 0; i < 20; ++i) series.push_back(rng.uniform(-1.0, 1.0));
    Ar1Net net({5, 4}, 3);
    const auto analytic = net.gradient(series);
    auto params = net.parameters();
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto plus = params, minus = params;
        plus[i] += h;
        minus[i] -= h;
        Ar1Net probe = net;
        probe.set_parameters(plus);
        const double lp = probe.loss(series);
        probe.set_parameters(minus);
        const double lm = probe.loss(series);
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max(std::abs(fd), 1.0);
        worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("AR1 curves pick the right metric and improve with the model class") {
    SystemSpec spec;
    spec.kind = SystemKind::Logistic;
    spec.map = {3.9, 0.01, 0.5};
    const Trajectory traj = simulate(spec, 200, 2);
    const std::vector<int> grid = {10, 50, 150};
    Ar1NetConfig cfg;
    cfg.hidden_widths = {32, 16};
    cfg.max_epochs = 4000;
    const LossCurve lin = ar1_loss_curve(traj, spec, Ar1Kind::Linear, cfg, grid);
    const LossCurve net = ar1_loss_curve(traj, spec, Ar1Kind::Net, cfg, grid);
    CHECK(lin.metric == Metric::Bhattacharyya);
    for (double v : lin.values) CHECK(std::isfinite(v));
    // the nonlinear model fits the quadratic map better at full context
    CHECK(value_at(net, 150) < value_at(lin, 150));

    SystemSpec det;
    det.kind = SystemKind::Logistic;
    det.map = {3.9, 0.0, 0.5};
    const Trajectory dtraj = simulate(det, 200, 0);
    const LossCurve dlin = ar1_loss_curve(dtraj, det, Ar1Kind::Linear, cfg, grid);
    CHECK(dlin.metric == Metric::Sdm);
}

TEST_CASE("the default context grid is the geometric ladder") {
    const auto grid = default_context_grid();
    REQUIRE(grid.size() == 12);
    CHECK(grid.front() == 2);
    CHECK(grid.back() == 1000);
}
