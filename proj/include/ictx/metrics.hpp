#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ictx/errors.hpp"
#include "ictx/hpdf.hpp"
#include "ictx/models.hpp"
#include "ictx/systems.hpp"

namespace ictx {

enum class Metric { Bhattacharyya, Sdm, Kl, Nll };

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Bhattacharyya: return "bhattacharyya";
        case Metric::Sdm: return "sdm";
        case Metric::Kl: return "kl";
        case Metric::Nll: return "nll";
    }
    return "unknown";
}

inline Metric metric_from_name(const std::string& name) {
    if (name == "bhattacharyya") return Metric::Bhattacharyya;
    if (name == "sdm") return Metric::Sdm;
    if (name == "kl") return Metric::Kl;
    if (name == "nll") return Metric::Nll;
    throw param_error("unknown metric: " + name);
}

struct LossPoint {
    int context_len = 0;
    double value = 0.0;
    Metric metric = Metric::Bhattacharyya;
};

inline constexpr double kMassFloor = 1e-12;
inline constexpr double kBhattacharyyaClamp = 50.0;

// Ground-truth bin masses on the PDF's partition, via CDF differences
// (truncated to the representable range like the oracle).
inline std::vector<double> discretize_kernel(const TransitionKernel& kernel_rescaled,
                                             const HierarchyPdf& pdf) {
    std::vector<double> masses;
    masses.reserve(pdf.bins.size());
    double total = 0.0;
    for (const auto& b : pdf.bins) {
        const double m = kernel_mass_truncated(kernel_rescaled, b.lo, b.hi);
        masses.push_back(m);
        total += m;
    }
    if (total > 0.0)
        for (double& m : masses) m /= total;
    return masses;
}

// Discrete Bhattacharyya on shared bin masses:
// sum sqrt(p(x) q(x)) dx = sum sqrt(p_mass * q_mass).
inline double bhattacharyya_masses(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw param_error("bhattacharyya_masses: partition mismatch");
    double bc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
    if (bc <= 0.0) return kBhattacharyyaClamp;
    return std::clamp(-std::log(bc), 0.0, kBhattacharyyaClamp);
}

inline double bhattacharyya(const TransitionKernel& kernel_rescaled, const HierarchyPdf& pdf) {
    if (!kernel_rescaled.stochastic())
        throw param_error("bhattacharyya: Dirac kernel, use sdm or nll instead");
    const auto truth = discretize_kernel(kernel_rescaled, pdf);
    std::vector<double> pred;
    pred.reserve(pdf.bins.size());
    for (const auto& b : pdf.bins) pred.push_back(b.mass);
    return bhattacharyya_masses(truth, pred);
}

// Closed form for two Gaussians.
inline double gaussian_bhattacharyya(double m1, double s1, double m2, double s2) {
    if (s1 <= 0.0 || s2 <= 0.0) throw param_error("gaussian_bhattacharyya: std must be positive");
    const double v = s1 * s1 + s2 * s2;
    const double dm = m1 - m2;
    return 0.25 * dm * dm / v + 0.5 * std::log(v / (2.0 * s1 * s2));
}

// Squared deviation of the true next value from the PDF mean.
inline double sdm(double x_true, const HierarchyPdf& pdf) {
    double mean = 0.0, total = 0.0;
    for (const auto& b : pdf.bins) {
        mean += b.mass * 0.5 * (b.lo + b.hi);
        total += b.mass;
    }
    if (total <= 0.0) throw numerical_error("sdm: empty PDF");
    mean /= total;
    const double d = x_true - mean;
    return d * d;
}

// KL(P || predicted) over the PDF partition, with mass floors inside logs.
inline double kl_divergence(const TransitionKernel& kernel_rescaled, const HierarchyPdf& pdf) {
    const auto truth = discretize_kernel(kernel_rescaled, pdf);
    double kl = 0.0;
    for (std::size_t i = 0; i < pdf.bins.size(); ++i) {
        if (truth[i] <= 0.0) continue;
        const double p = std::max(truth[i], kMassFloor);
        const double q = std::max(pdf.bins[i].mass, kMassFloor);
        kl += truth[i] * std::log(p / q);
    }
    return kl;
}

// Negative log predicted density at the true value.
inline double nll(double x_true, const HierarchyPdf& pdf) {
    const PdfBin& b = pdf.bin_at(x_true);
    const double density = std::max(b.mass, kMassFloor) / (b.hi - b.lo);
    return -std::log(density);
}

// Additive constant relating the Bhattacharyya distance of a bin-collapsed
// Dirac to the NLL: D_B = nll/2 + C with C = -(1/2) ln(finest bin width)
// = ((n-1)/2) ln 10.
inline double db_nll_constant(int n_digits) {
    return 0.5 * (n_digits - 1) * std::log(10.0);
}

// Bhattacharyya distance against a Dirac collapsed to its containing finest
// bin; the quantity the NLL reduction reproduces.
inline double bhattacharyya_collapsed_dirac(double x_true, const HierarchyPdf& pdf) {
    const PdfBin& b = pdf.bin_at(x_true);
    const double q = std::max(b.mass, kMassFloor);
    return std::clamp(-0.5 * std::log(q), 0.0, kBhattacharyyaClamp);
}

}  // namespace ictx
