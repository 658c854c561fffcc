#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "ictx/errors.hpp"
#include "ictx/metrics.hpp"

namespace ictx {

struct LossCurve {
    std::vector<int> context_lens;
    std::vector<double> values;
    std::vector<double> std_errors;  // empty unless averaged
    Metric metric = Metric::Bhattacharyya;

    std::size_t size() const { return context_lens.size(); }
};

// Pointwise arithmetic mean over seeds sharing one context grid; also
// reports the per-point standard error of the mean.
inline LossCurve average_curves(const std::vector<LossCurve>& curves) {
    if (curves.empty()) throw param_error("average_curves: no curves");
    const auto& grid = curves.front().context_lens;
    for (const auto& c : curves)
        if (c.context_lens != grid) throw param_error("average_curves: context grid mismatch");
    const std::size_t m = grid.size();
    const double k = static_cast<double>(curves.size());
    LossCurve out;
    out.context_lens = grid;
    out.metric = curves.front().metric;
    out.values.assign(m, 0.0);
    out.std_errors.assign(m, 0.0);
    for (const auto& c : curves)
        for (std::size_t i = 0; i < m; ++i) out.values[i] += c.values[i] / k;
    if (curves.size() > 1) {
        for (const auto& c : curves)
            for (std::size_t i = 0; i < m; ++i) {
                const double d = c.values[i] - out.values[i];
                out.std_errors[i] += d * d;
            }
        for (std::size_t i = 0; i < m; ++i)
            out.std_errors[i] = std::sqrt(out.std_errors[i] / (k * (k - 1.0)));
    }
    return out;
}

struct PowerLawFit {
    double alpha = 0.0;
    double d_c = 0.0;
    int t_min = 0;
    int t_max = 0;
    double r_squared = 0.0;
    int points_used = 0;
    int points_excluded = 0;  // nonpositive losses dropped from the window
};

// Least squares on (ln t, ln L) inside [t_min, t_max]; alpha is the slope,
// d_c comes from the intercept -alpha ln d_c.
inline PowerLawFit fit_power_law(const LossCurve& curve, int t_min, int t_max) {
    std::vector<double> xs, ys;
    int excluded = 0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const int t = curve.context_lens[i];
        if (t < t_min || t > t_max) continue;
        if (!(curve.values[i] > 0.0)) {
            ++excluded;
            continue;
        }
        xs.push_back(std::log(static_cast<double>(t)));
        ys.push_back(std::log(curve.values[i]));
    }
    if (xs.size() <= 2) throw param_error("fit_power_law: window has too few positive points");
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) throw numerical_error("fit_power_law: degenerate abscissa");
    PowerLawFit fit;
    fit.alpha = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - fit.alpha * sx) / n;
    fit.d_c = fit.alpha != 0.0 ? std::exp(-intercept / fit.alpha) : 0.0;
    fit.t_min = t_min;
    fit.t_max = t_max;
    fit.points_used = static_cast<int>(xs.size());
    fit.points_excluded = excluded;
    const double sst = syy - sy * sy / n;
    double ssr = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double resid = ys[i] - (intercept + fit.alpha * xs[i]);
        ssr += resid * resid;
    }
    fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    return fit;
}

inline PowerLawFit fit_power_law(const LossCurve& curve, int t_min = 10) {
    int t_max = t_min;
    for (int t : curve.context_lens) t_max = std::max(t_max, t);
    return fit_power_law(curve, t_min, t_max);
}

// Smallest context length beyond which the windowed log-log slope stays
// above -threshold; nullopt if the curve keeps decaying.
inline std::optional<int> detect_plateau(const LossCurve& curve, double threshold = 0.05,
                                         int window = 10) {
    if (curve.size() < static_cast<std::size_t>(window))
        throw param_error("detect_plateau: curve shorter than the slope window");
    std::vector<double> slopes;
    std::vector<int> starts;
    for (std::size_t i = 0; i + window <= curve.size(); ++i) {
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        int used = 0;
        for (int j = 0; j < window; ++j) {
            const double v = curve.values[i + j];
            if (!(v > 0.0)) continue;
            const double x = std::log(static_cast<double>(curve.context_lens[i + j]));
            const double y = std::log(v);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++used;
        }
        if (used < 3) continue;
        const double denom = used * sxx - sx * sx;
        if (std::abs(denom) < 1e-30) continue;
        slopes.push_back((used * sxy - sx * sy) / denom);
        starts.push_back(curve.context_lens[i]);
    }
    if (slopes.empty()) return std::nullopt;
    // scan from the back: the tail must be flat all the way to the end
    if (slopes.back() <= -threshold) return std::nullopt;
    std::size_t onset = slopes.size() - 1;
    while (onset > 0 && slopes[onset - 1] > -threshold) --onset;
    return starts[onset];
}

}  // namespace ictx
