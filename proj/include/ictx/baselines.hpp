#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "ictx/errors.hpp"
#include "ictx/metrics.hpp"
#include "ictx/models.hpp"
#include "ictx/random.hpp"
#include "ictx/scaling.hpp"
#include "ictx/systems.hpp"

namespace ictx {

// ---------------------------------------------------------------------------
// Discrete-chain baselines
// ---------------------------------------------------------------------------

inline double discrete_bhattacharyya(const std::vector<double>& p,
                                     const std::vector<double>& q) {
    return bhattacharyya_masses(p, q);
}

// In-context n-gram curve: at each t, the model fitted on x_1..x_t predicts
// the row for the current state, scored against the true row.
inline LossCurve ngram_loss_curve(const Trajectory& chain, const StochasticMatrix& matrix,
                                  int order, double alpha = 0.5) {
    matrix.validate();
    chain.validate();
    const int n = matrix.n;
    NgramModel model(order, n, alpha);
    LossCurve curve;
    curve.metric = Metric::Bhattacharyya;
    const int len = static_cast<int>(chain.values.size());
    for (int t = 0; t < len - 1; ++t) {
        const int state = static_cast<int>(std::lround(chain.values[t]));
        model.observe(state - 1);
        const auto predicted = model.predict(state - 1);
        const auto& truth = matrix.rows[state - 1];
        curve.context_lens.push_back(t + 1);
        curve.values.push_back(discrete_bhattacharyya(truth, predicted));
    }
    return curve;
}

inline LossCurve bigram_loss_curve(const Trajectory& chain, const StochasticMatrix& matrix,
                                   double alpha = 0.5) {
    return ngram_loss_curve(chain, matrix, 2, alpha);
}

inline LossCurve unigram_loss_curve(const Trajectory& chain, const StochasticMatrix& matrix,
                                    double alpha = 0.5) {
    return ngram_loss_curve(chain, matrix, 1, alpha);
}

// ---------------------------------------------------------------------------
// Continuous AR1 baselines
// ---------------------------------------------------------------------------

inline constexpr double kSigmaFloor = 1e-4;

struct GaussianPredictor {
    std::function<double(double)> mean_fn;
    std::function<double(double)> std_fn;
};

// Least-squares x_t = a x_{t-1} + b with a constant residual std.
inline GaussianPredictor fit_ar1_linear(const std::vector<double>& prefix) {
    const int n = static_cast<int>(prefix.size());
    if (n < 3) throw param_error("fit_ar1_linear: need at least 3 points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const int m = n - 1;
    for (int i = 0; i < m; ++i) {
        sx += prefix[i];
        sy += prefix[i + 1];
        sxx += prefix[i] * prefix[i];
        sxy += prefix[i] * prefix[i + 1];
    }
    const double denom = m * sxx - sx * sx;
    if (std::abs(denom) < 1e-30)
        throw numerical_error("fit_ar1_linear: degenerate input variance");
    const double a = (m * sxy - sx * sy) / denom;
    const double b = (sy - a * sx) / m;
    double ss = 0.0;
    for (int i = 0; i < m; ++i) {
        const double r = prefix[i + 1] - (a * prefix[i] + b);
        ss += r * r;
    }
    const double sigma = std::max(std::sqrt(ss / m), kSigmaFloor);
    return {[a, b](double x) { return a * x + b; }, [sigma](double) { return sigma; }};
}

// ---------------------------------------------------------------------------
// Heteroscedastic MLP: x -> (mu, sigma)
// ---------------------------------------------------------------------------

struct Ar1NetConfig {
    std::vector<int> hidden_widths{64, 32, 16};
    double learning_rate = 1e-3;
    int max_epochs = 5000;
    int patience = 200;
};

// Fully connected tanh network with a two-unit linear head (mu, log sigma);
// sigma = floor + exp(log sigma). Trained full-batch with Adam on the
// Gaussian NLL mean over pairs.
class Ar1Net {
  public:
    Ar1Net(const std::vector<int>& hidden_widths, std::uint64_t seed) {
        sizes_.push_back(1);
        for (int w : hidden_widths) {
            if (w < 1) throw param_error("Ar1Net: widths must be positive");
            sizes_.push_back(w);
        }
        sizes_.push_back(2);
        Rng rng(derive_seed(seed, 0x4e4e));
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            weights_.emplace_back(fan_in * fan_out);
            biases_.emplace_back(fan_out, 0.0);
            for (double& w : weights_.back()) w = rng.uniform(-bound, bound);
        }
        // start near unit-free sigma: bias the log-sigma head low
        biases_.back()[1] = -2.0;
    }

    int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }

    std::pair<double, double> predict(double x) const {
        std::vector<std::vector<double>> acts;
        forward(x, acts);
        const auto& out = acts.back();
        return {out[0], kSigmaFloor + std::exp(out[1])};
    }

    // Mean Gaussian NLL over consecutive pairs of `series`.
    double loss(const std::vector<double>& series) const {
        const int m = static_cast<int>(series.size()) - 1;
        double total = 0.0;
        for (int i = 0; i < m; ++i) {
            const auto [mu, sigma] = predict(series[i]);
            const double z = (series[i + 1] - mu) / sigma;
            total += std::log(sigma) + 0.5 * z * z;
        }
        return total / m;
    }

    // Analytic gradient of the mean NLL with respect to all parameters,
    // flattened in (weights, biases) layer order.
    std::vector<double> gradient(const std::vector<double>& series) const {
        std::vector<double> grad(parameter_count(), 0.0);
        const int m = static_cast<int>(series.size()) - 1;
        for (int i = 0; i < m; ++i) {
            std::vector<std::vector<double>> acts;
            forward(series[i], acts);
            const double mu = acts.back()[0];
            const double ls = acts.back()[1];
            const double sigma = kSigmaFloor + std::exp(ls);
            const double z = (series[i + 1] - mu) / sigma;
            // d loss / d (mu, log-sigma-head)
            std::vector<double> delta = {-z / sigma,
                                         (1.0 / sigma - z * z / sigma) * std::exp(ls)};
            backward(acts, delta, 1.0 / m, grad);
        }
        return grad;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
            n += weights_[l].size() + biases_[l].size();
        return n;
    }

    std::vector<double> parameters() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            out.insert(out.end(), weights_[l].begin(), weights_[l].end());
            out.insert(out.end(), biases_[l].begin(), biases_[l].end());
        }
        return out;
    }

    void set_parameters(const std::vector<double>& params) {
        std::size_t idx = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            for (double& w : weights_[l]) w = params[idx++];
            for (double& b : biases_[l]) b = params[idx++];
        }
        if (idx != params.size()) throw param_error("Ar1Net: parameter vector size mismatch");
    }

    const std::vector<int>& sizes() const { return sizes_; }

  private:
    void forward(double x, std::vector<std::vector<double>>& acts) const {
        acts.clear();
        acts.push_back({x});
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
            std::vector<double> z(fan_out);
            for (int j = 0; j < fan_out; ++j) {
                double acc = biases_[l][j];
                for (int k = 0; k < fan_in; ++k)
                    acc += weights_[l][j * fan_in + k] * acts.back()[k];
                z[j] = acc;
            }
            const bool last = (l + 2 == sizes_.size());
            if (!last)
                for (double& v : z) v = std::tanh(v);
            acts.push_back(std::move(z));
        }
    }

    // Accumulates scale * dL/dparam into grad given the output delta.
    void backward(const std::vector<std::vector<double>>& acts, std::vector<double> delta,
                  double scale, std::vector<double>& grad) const {
        // offsets of each layer's block in the flattened parameter vector
        std::vector<std::size_t> offsets;
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            offsets.push_back(off);
            off += weights_[l].size() + biases_[l].size();
        }
        for (int l = layer_count() - 1; l >= 0; --l) {
            const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
            const auto& input = acts[l];
            const std::size_t base = offsets[l];
            for (int j = 0; j < fan_out; ++j) {
                for (int k = 0; k < fan_in; ++k)
                    grad[base + j * fan_in + k] += scale * delta[j] * input[k];
                grad[base + fan_in * fan_out + j] += scale * delta[j];
            }
            if (l > 0) {
                std::vector<double> prev(fan_in, 0.0);
                for (int k = 0; k < fan_in; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j < fan_out; ++j)
                        acc += weights_[l][j * fan_in + k] * delta[j];
                    // tanh'(z) = 1 - a^2 through the stored activation
                    prev[k] = acc * (1.0 - input[k] * input[k]);
                }
                delta = std::move(prev);
            }
        }
    }

    std::vector<int> sizes_;
    std::vector<std::vector<double>> weights_;  // row-major [out][in]
    std::vector<std::vector<double>> biases_;
};

// Full-batch Adam with early stopping on the training loss; returns the
// network at its best recorded loss.
inline Ar1Net train_ar1_net(const std::vector<double>& prefix, const Ar1NetConfig& config,
                            std::uint64_t seed) {
    if (prefix.size() < 10) throw param_error("train_ar1_net: need at least 10 points");
    if (config.learning_rate <= 0.0) throw param_error("train_ar1_net: bad learning rate");
    Ar1Net net(config.hidden_widths, seed);
    std::vector<double> params = net.parameters();
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    double best_loss = net.loss(prefix);
    std::vector<double> best_params = params;
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto grad = net.gradient(prefix);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mh = m[i] / (1.0 - std::pow(beta1, epoch));
            const double vh = v[i] / (1.0 - std::pow(beta2, epoch));
            params[i] -= config.learning_rate * mh / (std::sqrt(vh) + eps);
        }
        net.set_parameters(params);
        const double l = net.loss(prefix);
        if (!std::isfinite(l))
            throw numerical_error("train_ar1_net: loss diverged at epoch " +
                                  std::to_string(epoch));
        if (l < best_loss - 1e-12) {
            best_loss = l;
            best_params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    net.set_parameters(best_params);
    return net;
}

inline GaussianPredictor ar1_net_predictor(Ar1Net net) {
    auto shared = std::make_shared<Ar1Net>(std::move(net));
    return {[shared](double x) { return shared->predict(x).first; },
            [shared](double x) { return shared->predict(x).second; }};
}

// ---------------------------------------------------------------------------
// AR1 loss curves
// ---------------------------------------------------------------------------

inline std::vector<int> default_context_grid() {
    return {2, 3, 5, 10, 18, 32, 56, 100, 178, 316, 562, 1000};
}

enum class Ar1Kind { Linear, Net };

// For each grid point t: retrain from scratch on x_1..x_t and score the
// predictor's Gaussian against the true kernel at x_t, closed form.
// Training failures leave a NaN at that grid point and the curve continues.
inline LossCurve ar1_loss_curve(const Trajectory& traj, const SystemSpec& system,
                                Ar1Kind kind, const Ar1NetConfig& config,
                                const std::vector<int>& grid, std::uint64_t seed = 1) {
    traj.validate();
    LossCurve curve;
    curve.metric = Metric::Bhattacharyya;
    for (int t : grid) {
        if (t < 2 || t >= static_cast<int>(traj.values.size()))
            throw param_error("ar1_loss_curve: grid point outside the trajectory");
        std::vector<double> prefix(traj.values.begin(), traj.values.begin() + t);
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
            GaussianPredictor pred =
                kind == Ar1Kind::Linear
                    ? fit_ar1_linear(prefix)
                    : ar1_net_predictor(train_ar1_net(prefix, config, derive_seed(seed, t)));
            const double x_t = traj.values[t - 1];
            const TransitionKernel truth = transition_kernel(system, x_t);
            if (truth.kind == TransitionKernel::Kind::Gaussian) {
                value = gaussian_bhattacharyya(truth.mean, truth.std, pred.mean_fn(x_t),
                                               std::max(pred.std_fn(x_t), kSigmaFloor));
            } else if (truth.kind == TransitionKernel::Kind::Dirac) {
                const double d = truth.point - pred.mean_fn(x_t);
                value = d * d;  // SDM for deterministic targets
                curve.metric = Metric::Sdm;
            } else {
                throw param_error("ar1_loss_curve: continuous systems only");
            }
        } catch (const error&) {
            // recorded as NaN; downstream fits skip nonpositive/non-finite
        }
        curve.context_lens.push_back(t);
        curve.values.push_back(value);
    }
    return curve;
}

}  // namespace ictx
