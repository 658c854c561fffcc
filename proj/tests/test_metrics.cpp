#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ictx/metrics.hpp"
#include "ictx/random.hpp"

using namespace ictx;

namespace {

// Depth-3 PDF whose masses equal the kernel's own discretization.
HierarchyPdf discretized_pdf(const TransitionKernel& kernel) {
    HierarchyPdf pdf;
    pdf.n_digits = 3;
    for (long c = 0; c < 1000; ++c) pdf.bins.push_back(make_bin(c, 3, 0.0));
    const auto masses = discretize_kernel(kernel, pdf);
    for (std::size_t i = 0; i < masses.size(); ++i) pdf.bins[i].mass = masses[i];
    return pdf;
}

HierarchyPdf random_full_depth_pdf(Rng& rng, int n_digits) {
    HierarchyPdf pdf;
    pdf.n_digits = n_digits;
    long count = 1;
    for (int i = 0; i < n_digits; ++i) count *= 10;
    double total = 0.0;
    for (long c = 0; c < count; ++c) {
        const double m = rng.exponential();
        pdf.bins.push_back(make_bin(c, n_digits, m));
        total += m;
    }
    for (auto& b : pdf.bins) b.mass /= total;
    return pdf;
}

}  // namespace

TEST_CASE("a distribution has zero distance to itself") {
    const TransitionKernel k = TransitionKernel::gaussian(5.0, 0.6);
    const HierarchyPdf pdf = discretized_pdf(k);
    CHECK(bhattacharyya(k, pdf) <= 1e-9);
    CHECK(kl_divergence(k, pdf) <= 1e-9);
}

TEST_CASE("Gaussian closed forms at unit separation") {
    // N(0,1) vs N(1,1): D_B = 1/8, KL = 1/2; evaluate on a fine shared grid
    const TransitionKernel p = TransitionKernel::gaussian(0.0, 1.0);
    const TransitionKernel q = TransitionKernel::gaussian(1.0, 1.0);
    std::vector<double> pm, qm;
    const double lo = -9.0, hi = 10.0;
    const int bins = 19000;
    const double w = (hi - lo) / bins;
    for (int i = 0; i < bins; ++i) {
        pm.push_back(kernel_mass(p, lo + i * w, lo + (i + 1) * w));
        qm.push_back(kernel_mass(q, lo + i * w, lo + (i + 1) * w));
    }
    CHECK(std::abs(bhattacharyya_masses(pm, qm) - 0.125) < 1e-3);
    double kl = 0.0;
    for (int i = 0; i < bins; ++i)
        if (pm[i] > 0.0 && qm[i] > 0.0) kl += pm[i] * std::log(pm[i] / qm[i]);
    CHECK(std::abs(kl - 0.5) < 5e-3);
    // the discretized value agrees with the closed-form helper
    CHECK(gaussian_bhattacharyya(0.0, 1.0, 1.0, 1.0) == Catch::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("in-range Gaussians reproduce the closed form through HierarchyPdf") {
    const TransitionKernel truth = TransitionKernel::gaussian(4.0, 0.35);
    const TransitionKernel model = TransitionKernel::gaussian(4.35, 0.35);
    const HierarchyPdf pdf = discretized_pdf(model);
    CHECK(std::abs(bhattacharyya(truth, pdf) - 0.125) < 1e-3);
}

TEST_CASE("disjoint supports clamp at 50") {
    const TransitionKernel truth = TransitionKernel::uniform(2.0, 3.0);
    HierarchyPdf pdf;
    pdf.n_digits = 1;
    pdf.bins.push_back(make_bin(6, 1, 1.0));  // all mass in [6, 7)
    pdf.bins.push_back(make_bin(2, 1, 0.0));
    pdf.sort_bins();
    CHECK(bhattacharyya(truth, pdf) == 50.0);
}

TEST_CASE("Dirac kernels are rejected by the stochastic metric") {
    HierarchyPdf pdf;
    pdf.bins.push_back(make_bin(5, 1, 1.0));
    CHECK_THROWS_AS(bhattacharyya(TransitionKernel::dirac(5.5), pdf), param_error);
}

TEST_CASE("squared deviation from the PDF mean") {
    HierarchyPdf uniform;
    uniform.n_digits = 1;
    for (long c = 1; c <= 7; ++c) uniform.bins.push_back(make_bin(c, 1, 1.0 / 7.0));
    uniform.sort_bins();
    // mean of the uniform tiling of [1, 8) is 4.5
    CHECK(sdm(4.5, uniform) == Catch::Approx(0.0).margin(1e-12));
    CHECK(sdm(6.0, uniform) == Catch::Approx(2.25).margin(1e-12));

    HierarchyPdf hot;
    hot.n_digits = 3;
    hot.bins.push_back(make_bin(525, 3, 1.0));
    CHECK(sdm(5.256, hot) <= 0.005 * 0.005 + 1e-15);
}

TEST_CASE("sdm ignores refinement of zero-mass bins") {
    HierarchyPdf a;
    a.n_digits = 2;
    a.bins.push_back(make_bin(4, 1, 1.0));
    a.bins.push_back(make_bin(6, 1, 0.0));
    a.sort_bins();
    HierarchyPdf b = a;
    b.bins.pop_back();
    for (long d = 0; d < 10; ++d) b.bins.push_back(make_bin(60 + d, 2, 0.0));
    b.sort_bins();
    CHECK(sdm(5.0, a) == Catch::Approx(sdm(5.0, b)).margin(1e-15));
}

TEST_CASE("KL floors missing mass instead of diverging") {
    const TransitionKernel truth = TransitionKernel::uniform(5.0, 5.1);
    HierarchyPdf pdf;
    pdf.n_digits = 2;
    pdf.bins.push_back(make_bin(50, 2, 0.0));
    pdf.bins.push_back(make_bin(51, 2, 1.0));
    pdf.sort_bins();
    const double kl = kl_divergence(truth, pdf);
    CHECK(kl == Catch::Approx(std::log(1.0 / kMassFloor)).epsilon(1e-9));
}

TEST_CASE("KL is nonnegative on random pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const TransitionKernel truth =
            TransitionKernel::gaussian(rng.uniform(3.0, 7.0), rng.uniform(0.1, 1.0));
        const HierarchyPdf pdf = random_full_depth_pdf(rng, 2);
        CHECK(kl_divergence(truth, pdf) >= -1e-6);
    }
}

TEST_CASE("negative log likelihood of flat and peaked PDFs") {
    HierarchyPdf uniform;
    uniform.n_digits = 1;
    for (long c = 1; c <= 7; ++c) uniform.bins.push_back(make_bin(c, 1, 1.0 / 7.0));
    uniform.sort_bins();
    CHECK(nll(5.0, uniform) == Catch::Approx(std::log(7.0)).epsilon(1e-12));

    HierarchyPdf hot;
    hot.n_digits = 3;
    hot.bins.push_back(make_bin(525, 3, 1.0));
    CHECK(nll(5.255, hot) == Catch::Approx(-std::log(100.0)).epsilon(1e-12));
}

TEST_CASE("Bhattacharyya-to-NLL identity for bin-collapsed Diracs") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3;
        const HierarchyPdf pdf = random_full_depth_pdf(rng, n);
        const double x = rng.uniform(1.5, 8.5);
        const double lhs = bhattacharyya_collapsed_dirac(x, pdf);
        const double rhs = 0.5 * nll(x, pdf) + db_nll_constant(n);
        CHECK(std::abs(lhs - rhs) <= 1e-9);
    }
}

TEST_CASE("metric names round-trip") {
    for (Metric m : {Metric::Bhattacharyya, Metric::Sdm, Metric::Kl, Metric::Nll})
        CHECK(metric_from_name(metric_name(m)) == m);
    CHECK_THROWS_AS(metric_from_name("wasserstein"), param_error);
}
