#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ictx/errors.hpp"
#include "ictx/random.hpp"

namespace ictx {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Row-stochastic transition matrix; rows[i][j] = P(X_{t+1}=j+1 | X_t=i+1).
struct StochasticMatrix {
    int n = 0;
    std::vector<std::vector<double>> rows;

    void validate() const {
        if (n < 2 || static_cast<int>(rows.size()) != n)
            throw param_error("StochasticMatrix: need n >= 2 rows");
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != n)
                throw param_error("StochasticMatrix: row length mismatch");
            double sum = 0.0;
            for (double p : row) {
                if (p < 0.0) throw param_error("StochasticMatrix: negative entry");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw param_error("StochasticMatrix: row does not sum to 1");
        }
    }
};

struct SdeParams {
    double mu = 0.0;
    double sigma = 0.0;
    double dt = 0.0;
    double x0 = 0.0;

    void validate() const {
        if (dt <= 0.0) throw param_error("SdeParams: dt must be positive");
        if (sigma < 0.0) throw param_error("SdeParams: sigma must be nonnegative");
    }
};

struct MapParams {
    double r = 3.9;
    double noise_sigma = 0.0;
    double x0 = 0.5;

    void validate() const {
        if (r < 1.0 || r >= 4.0) throw param_error("MapParams: r must lie in [1, 4)");
        if (noise_sigma < 0.0) throw param_error("MapParams: noise_sigma must be nonnegative");
        if (x0 <= 0.0 || x0 >= 1.0) throw param_error("MapParams: x0 must lie strictly in (0, 1)");
    }
};

struct LorenzParams {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    double dt = 0.01;
    int stride = 5;
    std::array<double, 3> init{1.0, 1.0, 1.0};

    void validate() const {
        if (dt <= 0.0) throw param_error("LorenzParams: dt must be positive");
        if (stride < 1) throw param_error("LorenzParams: stride must be >= 1");
    }
};

// Ground-truth conditional law P(X_{t+1} | x_t).
struct TransitionKernel {
    enum class Kind { CategoricalRow, Gaussian, Dirac, Uniform };

    Kind kind = Kind::Dirac;
    std::vector<double> probs;  // CategoricalRow
    double mean = 0.0;          // Gaussian
    double std = 0.0;           // Gaussian
    double point = 0.0;         // Dirac
    double lo = 0.0, hi = 0.0;  // Uniform

    static TransitionKernel categorical(std::vector<double> row) {
        TransitionKernel k;
        k.kind = Kind::CategoricalRow;
        k.probs = std::move(row);
        double sum = std::accumulate(k.probs.begin(), k.probs.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-9)
            throw param_error("TransitionKernel: categorical row does not sum to 1");
        return k;
    }
    static TransitionKernel gaussian(double mean, double std) {
        if (!(std >= 0.0) || !std::isfinite(std))
            throw param_error("TransitionKernel: gaussian std must be finite and >= 0");
        TransitionKernel k;
        k.kind = Kind::Gaussian;
        k.mean = mean;
        k.std = std;
        return k;
    }
    static TransitionKernel dirac(double point) {
        TransitionKernel k;
        k.kind = Kind::Dirac;
        k.point = point;
        return k;
    }
    static TransitionKernel uniform(double lo, double hi) {
        if (!(hi > lo)) throw param_error("TransitionKernel: uniform needs hi > lo");
        TransitionKernel k;
        k.kind = Kind::Uniform;
        k.lo = lo;
        k.hi = hi;
        return k;
    }

    bool stochastic() const { return kind != Kind::Dirac; }
};

struct Trajectory {
    std::vector<double> values;
    std::optional<double> dt;  // none for maps and discrete chains
    std::uint64_t seed = 0;
    std::string system_tag;

    void validate() const {
        if (values.size() < 2) throw param_error("Trajectory: length must be >= 2");
        for (double v : values)
            if (!std::isfinite(v)) throw simulation_error("Trajectory: non-finite value");
    }
};

inline double gaussian_cdf(double x, double mean, double std) {
    if (std <= 0.0) return x >= mean ? 1.0 : 0.0;
    return 0.5 * std::erfc(-(x - mean) / (std * 1.4142135623730951));
}

// Kernel mass on the half-open interval [a, b), untruncated. Categorical
// states i live on [i, i+1).
inline double kernel_mass(const TransitionKernel& k, double a, double b) {
    if (b <= a) return 0.0;
    switch (k.kind) {
        case TransitionKernel::Kind::Gaussian:
            return gaussian_cdf(b, k.mean, k.std) - gaussian_cdf(a, k.mean, k.std);
        case TransitionKernel::Kind::Dirac:
            return (k.point >= a && k.point < b) ? 1.0 : 0.0;
        case TransitionKernel::Kind::Uniform: {
            const double lo = std::max(a, k.lo), hi = std::min(b, k.hi);
            return hi > lo ? (hi - lo) / (k.hi - k.lo) : 0.0;
        }
        case TransitionKernel::Kind::CategoricalRow: {
            double m = 0.0;
            for (std::size_t i = 0; i < k.probs.size(); ++i) {
                const double s = static_cast<double>(i + 1);
                if (s >= a && s < b) m += k.probs[i];
            }
            return m;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// System specification (the five studied systems)
// ---------------------------------------------------------------------------

enum class SystemKind { Markov, Logistic, BrownianMotion, GeometricBrownianMotion, Lorenz };

struct SystemSpec {
    SystemKind kind = SystemKind::Logistic;
    StochasticMatrix matrix;  // Markov
    MapParams map;            // Logistic
    SdeParams sde;            // BM / GBM
    LorenzParams lorenz;      // Lorenz
    int markov_start = 0;     // 0 = sample the start state from the seed

    bool discrete() const { return kind == SystemKind::Markov; }
    bool deterministic() const {
        switch (kind) {
            case SystemKind::Logistic: return map.noise_sigma == 0.0;
            case SystemKind::Lorenz: return true;
            case SystemKind::BrownianMotion:
            case SystemKind::GeometricBrownianMotion: return sde.sigma == 0.0;
            case SystemKind::Markov: return false;
        }
        return false;
    }

    std::string tag() const {
        switch (kind) {
            case SystemKind::Markov: return "markov";
            case SystemKind::Logistic: return map.noise_sigma > 0.0 ? "noisy_logistic" : "logistic";
            case SystemKind::BrownianMotion: return "bm";
            case SystemKind::GeometricBrownianMotion: return "gbm";
            case SystemKind::Lorenz: return "lorenz";
        }
        return "unknown";
    }
};

// Floor on Gaussian kernel widths where |f'| -> 0 would otherwise collapse
// the conditional law to a Dirac (in system units).
inline constexpr double kStdFloor = 1e-4;

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

// Rows drawn i.i.d. from the flat Dirichlet via normalized exponentials.
inline StochasticMatrix sample_markov_matrix(int n, std::uint64_t seed) {
    if (n < 2 || n > 10) throw param_error("sample_markov_matrix: n must lie in [2, 10]");
    Rng rng(derive_seed(seed, 0x5351));
    StochasticMatrix m;
    m.n = n;
    m.rows.assign(n, std::vector<double>(n));
    for (auto& row : m.rows) {
        double sum = 0.0;
        for (double& p : row) {
            p = rng.exponential();
            sum += p;
        }
        for (double& p : row) p /= sum;
        // exact row-sum normalization
        double s2 = std::accumulate(row.begin(), row.end(), 0.0);
        row.back() += 1.0 - s2;
    }
    m.validate();
    return m;
}

// States are 1-based; start = 0 samples the initial state uniformly.
inline Trajectory simulate_markov_chain(const StochasticMatrix& matrix, int steps,
                                        std::uint64_t seed, int start = 0) {
    matrix.validate();
    if (steps < 1) throw param_error("simulate_markov_chain: steps must be >= 1");
    if (start < 0 || start > matrix.n) throw param_error("simulate_markov_chain: bad start state");
    Rng rng(derive_seed(seed, 0x4d43));
    int state = start > 0 ? start : static_cast<int>(rng.below(matrix.n)) + 1;
    Trajectory traj;
    traj.seed = seed;
    traj.system_tag = "markov";
    traj.values.reserve(steps + 1);
    traj.values.push_back(state);
    for (int t = 0; t < steps; ++t) {
        const auto& row = matrix.rows[state - 1];
        double u = rng.uniform();
        double acc = 0.0;
        int next = matrix.n;
        for (int j = 0; j < matrix.n; ++j) {
            acc += row[j];
            if (u < acc) {
                next = j + 1;
                break;
            }
        }
        state = next;
        traj.values.push_back(state);
    }
    return traj;
}

inline double logistic_f(double r, double x) { return r * x * (1.0 - x); }
inline double logistic_fprime(double r, double x) { return r * (1.0 - 2.0 * x); }

// x_{t+1} = f(x_t + eps), eps ~ N(0, sigma^2); results clipped to
// [1e-6, 1-1e-6] so the trajectory never leaves (0, 1).
inline Trajectory simulate_map(const MapParams& params, int steps, std::uint64_t seed) {
    params.validate();
    if (steps < 1) throw param_error("simulate_map: steps must be >= 1");
    Rng rng(derive_seed(seed, 0x4c4d));
    Trajectory traj;
    traj.seed = seed;
    traj.system_tag = params.noise_sigma > 0.0 ? "noisy_logistic" : "logistic";
    traj.values.reserve(steps + 1);
    double x = params.x0;
    traj.values.push_back(x);
    for (int t = 0; t < steps; ++t) {
        double in = x;
        if (params.noise_sigma > 0.0) in += params.noise_sigma * rng.normal();
        x = logistic_f(params.r, in);
        x = std::clamp(x, 1e-6, 1.0 - 1e-6);
        if (!std::isfinite(x)) throw simulation_error("simulate_map: trajectory escaped (0, 1)");
        traj.values.push_back(x);
    }
    return traj;
}

enum class SdeKind { BM, GBM };

// Euler-Maruyama stepping; sigma = 0 degenerates to deterministic Euler.
inline Trajectory simulate_sde(const SdeParams& params, SdeKind kind, int steps,
                               std::uint64_t seed) {
    params.validate();
    if (steps < 1) throw param_error("simulate_sde: steps must be >= 1");
    if (kind == SdeKind::GBM && params.x0 <= 0.0)
        throw param_error("simulate_sde: GBM requires x0 > 0");
    Rng rng(derive_seed(seed, 0x5345));
    Trajectory traj;
    traj.seed = seed;
    traj.dt = params.dt;
    traj.system_tag = kind == SdeKind::BM ? "bm" : "gbm";
    traj.values.reserve(steps + 1);
    double x = params.x0;
    traj.values.push_back(x);
    const double sqdt = std::sqrt(params.dt);
    for (int t = 0; t < steps; ++t) {
        const double z = params.sigma > 0.0 ? rng.normal() : 0.0;
        if (kind == SdeKind::BM) {
            x += params.mu * params.dt + params.sigma * sqdt * z;
        } else {
            x += params.mu * x * params.dt + params.sigma * x * sqdt * z;
        }
        if (!std::isfinite(x)) throw simulation_error("simulate_sde: non-finite state");
        traj.values.push_back(x);
    }
    return traj;
}

// Forward Euler on the Lorenz equations; records the x-component every
// `stride` integration steps.
inline Trajectory simulate_lorenz(const LorenzParams& params, int steps) {
    params.validate();
    if (steps < 1) throw param_error("simulate_lorenz: steps must be >= 1");
    Trajectory traj;
    traj.dt = params.dt * params.stride;
    traj.system_tag = "lorenz";
    traj.values.reserve(steps + 1);
    double x = params.init[0], y = params.init[1], z = params.init[2];
    traj.values.push_back(x);
    for (int t = 0; t < steps; ++t) {
        for (int s = 0; s < params.stride; ++s) {
            const double dx = params.sigma * (y - x);
            const double dy = x * (params.rho - z) - y;
            const double dz = x * y - params.beta * z;
            x += params.dt * dx;
            y += params.dt * dy;
            z += params.dt * dz;
            if (std::abs(x) > 1e6 || std::abs(y) > 1e6 || std::abs(z) > 1e6)
                throw simulation_error("simulate_lorenz: numerical blow-up");
        }
        traj.values.push_back(x);
    }
    return traj;
}

inline Trajectory simulate(const SystemSpec& spec, int steps, std::uint64_t seed) {
    switch (spec.kind) {
        case SystemKind::Markov:
            return simulate_markov_chain(spec.matrix, steps, seed, spec.markov_start);
        case SystemKind::Logistic: {
            MapParams p = spec.map;
            // decorrelate seeds through the initial condition, as for any
            // chaotic map distinct x0 give independent-looking trajectories
            if (seed != 0) {
                Rng rng(derive_seed(seed, 0x5830));
                p.x0 = rng.uniform(0.05, 0.95);
            }
            return simulate_map(p, steps, seed);
        }
        case SystemKind::BrownianMotion:
            return simulate_sde(spec.sde, SdeKind::BM, steps, seed);
        case SystemKind::GeometricBrownianMotion:
            return simulate_sde(spec.sde, SdeKind::GBM, steps, seed);
        case SystemKind::Lorenz: {
            LorenzParams p = spec.lorenz;
            if (seed != 0) {
                Rng rng(derive_seed(seed, 0x4c5a));
                p.init[0] = rng.uniform(0.0, 0.3);
            }
            return simulate_lorenz(p, steps);
        }
    }
    throw param_error("simulate: unknown system kind");
}

// ---------------------------------------------------------------------------
// Ground-truth kernels
// ---------------------------------------------------------------------------

// Exact conditional law of the next state given x_t, in system units.
// Lorenz is non-Markovian in the observed x-component alone; use
// state_kernels for it.
inline TransitionKernel transition_kernel(const SystemSpec& spec, double x_t) {
    switch (spec.kind) {
        case SystemKind::Markov: {
            spec.matrix.validate();
            const int i = static_cast<int>(std::lround(x_t));
            if (i < 1 || i > spec.matrix.n || std::abs(x_t - i) > 1e-9)
                throw param_error("transition_kernel: state outside {1..n}");
            return TransitionKernel::categorical(spec.matrix.rows[i - 1]);
        }
        case SystemKind::Logistic: {
            spec.map.validate();
            if (x_t < 0.0 || x_t > 1.0)
                throw param_error("transition_kernel: logistic state outside [0, 1]");
            const double mean = logistic_f(spec.map.r, x_t);
            if (spec.map.noise_sigma == 0.0) return TransitionKernel::dirac(mean);
            const double std =
                std::max(std::abs(spec.map.noise_sigma * logistic_fprime(spec.map.r, x_t)),
                         kStdFloor);
            return TransitionKernel::gaussian(mean, std);
        }
        case SystemKind::BrownianMotion: {
            spec.sde.validate();
            const double mean = x_t + spec.sde.mu * spec.sde.dt;
            if (spec.sde.sigma == 0.0) return TransitionKernel::dirac(mean);
            const double std =
                std::max(spec.sde.sigma * std::sqrt(spec.sde.dt), kStdFloor);
            return TransitionKernel::gaussian(mean, std);
        }
        case SystemKind::GeometricBrownianMotion: {
            spec.sde.validate();
            if (x_t <= 0.0) throw param_error("transition_kernel: GBM state must be positive");
            const double mean = x_t + spec.sde.mu * x_t * spec.sde.dt;
            if (spec.sde.sigma == 0.0) return TransitionKernel::dirac(mean);
            const double std =
                std::max(spec.sde.sigma * x_t * std::sqrt(spec.sde.dt), kStdFloor);
            return TransitionKernel::gaussian(mean, std);
        }
        case SystemKind::Lorenz:
            throw param_error("transition_kernel: Lorenz requires the full trajectory");
    }
    throw param_error("transition_kernel: unknown system kind");
}

// Kernel for each predicted state s >= 1: the law of values[s] given the
// realized history. Deterministic systems yield Dirac at the realized value.
inline std::vector<TransitionKernel> state_kernels(const SystemSpec& spec,
                                                   const Trajectory& traj) {
    traj.validate();
    std::vector<TransitionKernel> out;
    out.reserve(traj.values.size());
    out.push_back(TransitionKernel::dirac(traj.values.front()));  // placeholder, never scored
    for (std::size_t s = 1; s < traj.values.size(); ++s) {
        if (spec.kind == SystemKind::Lorenz || spec.deterministic()) {
            out.push_back(TransitionKernel::dirac(traj.values[s]));
        } else {
            out.push_back(transition_kernel(spec, traj.values[s - 1]));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stationary distribution and SDE marginals
// ---------------------------------------------------------------------------

// Fixed point of the distribution evolution pi P = pi, by power iteration
// from uniform. Damped update kicks in if plain iteration oscillates
// (periodic chains).
inline std::vector<double> stationary_distribution(const StochasticMatrix& matrix) {
    matrix.validate();
    const int n = matrix.n;
    auto step = [&](const std::vector<double>& pi) {
        std::vector<double> next(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) next[j] += pi[i] * matrix.rows[i][j];
        return next;
    };
    auto residual = [&](const std::vector<double>& pi) {
        auto next = step(pi);
        double r = 0.0;
        for (int j = 0; j < n; ++j) r = std::max(r, std::abs(next[j] - pi[j]));
        return r;
    };

    std::vector<double> pi(n, 1.0 / n);
    constexpr double kTol = 1e-14;
    constexpr int kCap = 100000;
    int iter = 0;
    for (; iter < 1000; ++iter) {
        if (residual(pi) <= kTol) return pi;
        pi = step(pi);
    }
    // damped phase for oscillating (periodic) chains
    constexpr double kDamp = 0.999;
    for (; iter < kCap; ++iter) {
        if (residual(pi) <= kTol) return pi;
        auto next = step(pi);
        for (int j = 0; j < n; ++j) pi[j] = kDamp * next[j] + (1.0 - kDamp) * pi[j];
    }
    if (residual(pi) <= kTol) return pi;
    throw numerical_error("stationary_distribution: power iteration did not converge");
}

// Closed-form marginal density of the SDE state at time t.
inline double marginal_density(SdeKind kind, const SdeParams& params, double t, double x) {
    params.validate();
    if (t <= 0.0) throw param_error("marginal_density: t must be positive");
    const double var = params.sigma * params.sigma * t;
    if (kind == SdeKind::BM) {
        const double mean = params.x0 + params.mu * t;
        return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) /
               std::sqrt(2.0 * 3.14159265358979323846 * var);
    }
    if (x <= 0.0) throw param_error("marginal_density: GBM density requires x > 0");
    if (params.x0 <= 0.0) throw param_error("marginal_density: GBM requires x0 > 0");
    const double m = std::log(params.x0) + (params.mu - 0.5 * params.sigma * params.sigma) * t;
    const double d = std::log(x) - m;
    return std::exp(-d * d / (2.0 * var)) /
           (x * std::sqrt(2.0 * 3.14159265358979323846 * var));
}

}  // namespace ictx
