#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "ictx/hpdf.hpp"
#include "ictx/metrics.hpp"
#include "ictx/models.hpp"

using namespace ictx;

namespace {

// Minimal backend answering every digit query with the uniform distribution.
class UniformBackend : public ModelBackend {
  public:
    CacheHandle fresh() override { return {next_id_++, 0}; }
    std::pair<TokenDistribution, CacheHandle> next_distribution(const CacheHandle& cache,
                                                                Token) override {
        record_call();
        return {TokenDistribution::uniform_digits(), CacheHandle{next_id_++, cache.prefix_len + 1}};
    }
    CacheHandle fork(const CacheHandle& cache) override {
        record_fork();
        return {next_id_++, cache.prefix_len};
    }

  private:
    std::uint64_t next_id_ = 1;
};

// Two-state token sequence "400 , <digits of x>" with the identity rescale
// map, backed by an oracle for `kernel` at state 1.
struct SingleKernelRig {
    TokenSeq seq;
    OracleBackend backend;
    TransitionKernel kernel;

    SingleKernelRig(const TransitionKernel& k, double realized)
        : backend({TransitionKernel::dirac(4.0), k}, 3, true), kernel(k) {
        Trajectory traj;
        traj.values = {4.0, realized};
        seq = serialize_trajectory(traj, RescaleMap::identity(), 3);
    }
};

}  // namespace

TEST_CASE("initial pass costs one call per token") {
    SingleKernelRig rig(TransitionKernel::gaussian(5.0, 0.5), 5.0);
    ExtractionRun run = initial_pass(rig.backend, rig.seq);
    CHECK(run.ledger.forward_calls == 7);
    CHECK(rig.backend.call_count() == 7);
    REQUIRE(run.states.size() == 2);
}

TEST_CASE("Dirac kernels concentrate the main-branch PDF") {
    SingleKernelRig rig(TransitionKernel::dirac(5.25), 5.25);
    ExtractionRun run = initial_pass(rig.backend, rig.seq);
    const HierarchyPdf& pdf = run.states[1].pdf;
    const PdfBin& bin = pdf.bin_at(5.255);
    CHECK(bin.depth == 3);
    CHECK(bin.mass >= 1.0 - 1e-12);
    CHECK(pdf.total_mass() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("uniform-digit backend yields the product-form coarse PDF") {
    Trajectory traj;
    traj.values = {4.0, 5.25};
    const TokenSeq seq = serialize_trajectory(traj, RescaleMap::identity(), 3);
    UniformBackend backend;
    ExtractionRun run = initial_pass(backend, seq);
    const HierarchyPdf& pdf = run.states[1].pdf;
    // realized digits 5,2,5: chain refined, siblings coarse
    REQUIRE(pdf.bins.size() == 9 + 9 + 10);
    for (const auto& b : pdf.bins) {
        if (b.depth == 1) CHECK(b.mass == Catch::Approx(0.1));
        if (b.depth == 2) CHECK(b.mass == Catch::Approx(0.01));
        if (b.depth == 3) CHECK(b.mass == Catch::Approx(0.001));
    }
    CHECK(pdf.total_mass() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("full refinement of one state costs exactly 108 extra calls") {
    CHECK(full_refinement_calls(3, 1) == 108);
    SingleKernelRig rig(TransitionKernel::gaussian(5.0, 0.5), 5.0);
    ExtractionRun run = initial_pass(rig.backend, rig.seq);
    const long before = rig.backend.call_count();
    CallLedger ledger = recursive_refiner(run.states[1], RefinePolicy::full(3), rig.backend);
    CHECK(ledger.forward_calls == 108);
    CHECK(rig.backend.call_count() - before == 108);
}

TEST_CASE("refining an already-refined PDF is free") {
    SingleKernelRig rig(TransitionKernel::gaussian(5.0, 0.5), 5.0);
    ExtractionRun run = initial_pass(rig.backend, rig.seq);
    recursive_refiner(run.states[1], RefinePolicy::full(3), rig.backend);
    const auto bins_before = run.states[1].pdf.bins;
    const long calls_before = rig.backend.call_count();
    CallLedger ledger = recursive_refiner(run.states[1], RefinePolicy::full(3), rig.backend);
    CHECK(ledger.forward_calls == 0);
    CHECK(rig.backend.call_count() == calls_before);
    REQUIRE(run.states[1].pdf.bins.size() == bins_before.size());
    for (std::size_t i = 0; i < bins_before.size(); ++i)
        CHECK(run.states[1].pdf.bins[i].mass == bins_before[i].mass);
}

TEST_CASE("oracle extraction reproduces kernel bin masses exactly") {
    const TransitionKernel kernel = TransitionKernel::gaussian(5.0, 0.5);
    SingleKernelRig rig(kernel, 5.0);
    ExtractionRun run = initial_pass(rig.backend, rig.seq);
    recursive_refiner(run.states[1], RefinePolicy::full(3), rig.backend);
    const HierarchyPdf& pdf = run.states[1].pdf;
    REQUIRE(pdf.bins.size() == 1000);
    const auto truth = discretize_kernel(kernel, pdf);
    for (std::size_t i = 0; i < pdf.bins.size(); ++i)
        CHECK(std::abs(pdf.bins[i].mass - truth[i]) <= 1e-12);
}

TEST_CASE("refinement conserves mass and leaves unrefined bins alone") {
    SingleKernelRig rig(TransitionKernel::gaussian(5.6, 0.2), 5.6);
    ExtractionRun run = initial_pass(rig.backend, rig.seq);
    const HierarchyPdf coarse = run.states[1].pdf;
    recursive_refiner(run.states[1], RefinePolicy::top_k(3, 2), rig.backend);
    const HierarchyPdf& fine = run.states[1].pdf;
    CHECK(fine.total_mass() == Catch::Approx(1.0).margin(1e-9));
    // every coarse interval keeps its exact mass
    for (const auto& cb : coarse.bins) {
        double covered = 0.0;
        for (const auto& fb : fine.bins)
            if (fb.lo >= cb.lo - 1e-12 && fb.hi <= cb.hi + 1e-12) covered += fb.mass;
        CHECK(covered == Catch::Approx(cb.mass).margin(1e-12));
    }
}

TEST_CASE("larger k refines a superset of bins") {
    auto run_with_k = [](int k) {
        SingleKernelRig rig(TransitionKernel::gaussian(5.6, 0.8), 5.6);
        ExtractionRun run = initial_pass(rig.backend, rig.seq);
        recursive_refiner(run.states[1], RefinePolicy::top_k(3, k), rig.backend);
        return run.states[1].pdf;
    };
    const HierarchyPdf p2 = run_with_k(2);
    const HierarchyPdf p3 = run_with_k(3);
    CHECK(p3.bins.size() >= p2.bins.size());
    // the k=3 tiling is everywhere at least as fine: every k=3 leaf sits
    // inside a k=2 leaf of equal or smaller depth
    for (const auto& fine : p3.bins) {
        const PdfBin& coarse = p2.bin_at(0.5 * (fine.lo + fine.hi));
        CHECK(coarse.depth <= fine.depth);
        CHECK(coarse.lo <= fine.lo + 1e-12);
        CHECK(coarse.hi >= fine.hi - 1e-12);
    }
}

TEST_CASE("moments of extracted uniform and Gaussian kernels") {
    SingleKernelRig uni(TransitionKernel::uniform(1.5, 8.5), 5.0);
    ExtractionRun run_u = initial_pass(uni.backend, uni.seq);
    recursive_refiner(run_u.states[1], RefinePolicy::full(3), uni.backend);
    const PdfMoments mu = pdf_moments(run_u.states[1].pdf);
    CHECK(mu.mean == Catch::Approx(5.0).margin(1e-6));
    CHECK(std::abs(mu.kurtosis - 9.0 / 5.0) < 0.02);

    SingleKernelRig gauss(TransitionKernel::gaussian(5.0, 0.5), 5.0);
    ExtractionRun run_g = initial_pass(gauss.backend, gauss.seq);
    recursive_refiner(run_g.states[1], RefinePolicy::full(3), gauss.backend);
    const PdfMoments mg = pdf_moments(run_g.states[1].pdf);
    CHECK(mg.mean == Catch::Approx(5.0).margin(1e-6));
    CHECK(std::abs(mg.kurtosis - 3.0) < 0.1);
}

TEST_CASE("degenerate PDFs have no kurtosis") {
    HierarchyPdf pdf;
    pdf.n_digits = 3;
    pdf.bins.push_back(make_bin(525, 3, 1.0));
    const PdfMoments m = [&] {
        PdfMoments out;
        out.mean = 5.255;
        return out;
    }();
    CHECK_THROWS_AS(pdf_moments(pdf), numerical_error);
    (void)m;
}

TEST_CASE("density is mass over width and integrates to one") {
    HierarchyPdf pdf;
    pdf.n_digits = 1;
    for (long c = 1; c <= 7; ++c) pdf.bins.push_back(make_bin(c, 1, 1.0 / 7.0));
    pdf.sort_bins();
    CHECK(pdf_density_at(pdf, 4.3) == Catch::Approx(1.0 / 7.0));
    double integral = 0.0;
    for (const auto& b : pdf.bins) integral += pdf_density_at(pdf, 0.5 * (b.lo + b.hi)) * (b.hi - b.lo);
    CHECK(integral == Catch::Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(pdf.bin_at(9.5), param_error);
}

TEST_CASE("one-hot finest bin density") {
    HierarchyPdf pdf;
    pdf.n_digits = 3;
    pdf.bins.push_back(make_bin(525, 3, 1.0));
    CHECK(pdf_density_at(pdf, 5.255) == Catch::Approx(100.0));
}

TEST_CASE("call accounting over a multi-state sweep") {
    // trajectory of 6 states, Gaussian kernels, full refinement of states 1..5
    Trajectory traj;
    traj.values = {4.0, 5.0, 4.5, 6.0, 3.8, 5.5};
    std::vector<TransitionKernel> kernels;
    kernels.push_back(TransitionKernel::dirac(traj.values[0]));
    for (std::size_t s = 1; s < traj.values.size(); ++s)
        kernels.push_back(TransitionKernel::gaussian(traj.values[s], 0.4));
    const TokenSeq seq = serialize_trajectory(traj, RescaleMap::identity(), 3);
    OracleBackend backend(kernels, 3, true);
    ExtractionRun run = initial_pass(backend, seq);
    for (int s = 1; s < seq.states(); ++s)
        recursive_refiner(run.states[s], RefinePolicy::full(3), backend);
    const long expected = static_cast<long>(seq.tokens.size()) + full_refinement_calls(3, 5);
    CHECK(backend.call_count() == expected);
}
