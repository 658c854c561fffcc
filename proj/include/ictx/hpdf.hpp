#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "ictx/codec.hpp"
#include "ictx/errors.hpp"
#include "ictx/models.hpp"

namespace ictx {

// ---------------------------------------------------------------------------
// Multi-resolution binned density
// ---------------------------------------------------------------------------

// One bin: half-open interval in rescaled units, its probability mass and
// digit depth. `code` is the digit prefix read as an integer.
struct PdfBin {
    double lo = 0.0;
    double hi = 0.0;
    double mass = 0.0;
    int depth = 1;
    long code = 0;
};

inline double bin_width(int depth) { return std::pow(10.0, 1 - depth); }

inline PdfBin make_bin(long code, int depth, double mass) {
    const double w = bin_width(depth);
    return {code * w, (code + 1) * w, mass, depth, code};
}

struct HierarchyPdf {
    std::vector<PdfBin> bins;  // kept sorted by lo
    int state_index = -1;
    int n_digits = 3;

    double total_mass() const {
        double s = 0.0;
        for (const auto& b : bins) s += b.mass;
        return s;
    }

    const PdfBin& bin_at(double x) const {
        for (const auto& b : bins)
            if (x >= b.lo && x < b.hi) return b;
        throw param_error("HierarchyPdf: value outside the tiled range");
    }

    void sort_bins() {
        std::sort(bins.begin(), bins.end(),
                  [](const PdfBin& a, const PdfBin& b) { return a.lo < b.lo; });
    }
};

// mass / width of the containing bin.
inline double pdf_density_at(const HierarchyPdf& pdf, double x) {
    const PdfBin& b = pdf.bin_at(x);
    return b.mass / (b.hi - b.lo);
}

struct PdfMoments {
    double mean = 0.0;
    double variance = 0.0;
    double fourth_central = 0.0;
    double kurtosis = 0.0;
};

// Moments with bin centers as representative points.
inline PdfMoments pdf_moments(const HierarchyPdf& pdf) {
    PdfMoments m;
    double total = 0.0;
    for (const auto& b : pdf.bins) {
        m.mean += b.mass * 0.5 * (b.lo + b.hi);
        total += b.mass;
    }
    if (total <= 0.0) throw numerical_error("pdf_moments: empty PDF");
    m.mean /= total;
    for (const auto& b : pdf.bins) {
        const double d = 0.5 * (b.lo + b.hi) - m.mean;
        m.variance += b.mass * d * d;
        m.fourth_central += b.mass * d * d * d * d;
    }
    m.variance /= total;
    m.fourth_central /= total;
    if (m.variance < 1e-18)
        throw numerical_error("pdf_moments: kurtosis undefined for near-degenerate PDF");
    m.kurtosis = m.fourth_central / (m.variance * m.variance);
    return m;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

struct RefinePolicy {
    enum class Mode { Full, TopK };
    int target_depth = 3;
    Mode mode = Mode::Full;
    int k = 2;

    static RefinePolicy full(int depth) { return {depth, Mode::Full, 0}; }
    static RefinePolicy top_k(int depth, int k) {
        if (k < 1) throw param_error("RefinePolicy: top_k requires k >= 1");
        return {depth, Mode::TopK, k};
    }
};

struct CallLedger {
    long forward_calls = 0;
    long cache_hits = 0;

    CallLedger& operator+=(const CallLedger& o) {
        forward_calls += o.forward_calls;
        cache_hits += o.cache_hits;
        return *this;
    }
};

// Everything the refiner needs about one state: the coarse PDF, the realized
// digits, the cached main-branch distributions and the cache handles placed
// along the realized prefix during the initial sweep.
struct StateExtraction {
    HierarchyPdf pdf;
    std::vector<int> realized;                      // realized digits of this state
    CacheHandle state_cache;                        // context up to (not incl.) first digit
    std::vector<TokenDistribution> main_dists;      // [j] = dist of digit j given realized prefix
    std::vector<CacheHandle> main_prefix_caches;    // [len] = cache after realized prefix, len>=1
};

struct ExtractionRun {
    std::vector<StateExtraction> states;
    CallLedger ledger;
};

namespace detail {

inline TokenDistribution digits_only(const TokenDistribution& dist, double temperature) {
    TokenDistribution d = dist;
    if (temperature != 1.0) d = apply_temperature(d, temperature);
    return restrict_and_renormalize(d, digit_tokens());
}

}  // namespace detail

// One forward sweep over the whole token sequence: exactly seq.tokens.size()
// forward calls. Produces, per state, a PDF refined along the realized digit
// chain with coarse siblings, plus the cache handles refinement reuses.
inline ExtractionRun initial_pass(ModelBackend& model, const TokenSeq& seq,
                                  double temperature = 1.0) {
    const int s_count = seq.states();
    const int n = seq.n_digits;
    if (s_count < 1) throw param_error("initial_pass: empty sequence");

    // position -> (state, digit index) map; -1 marks separators
    const int len = static_cast<int>(seq.tokens.size());
    std::vector<int> pos_state(len, -1), pos_digit(len, -1);
    for (int s = 0; s < s_count; ++s) {
        const int o = seq.state_offsets[s];
        for (int j = 0; j < n; ++j) {
            pos_state[o + j] = s;
            pos_digit[o + j] = j;
        }
    }

    ExtractionRun run;
    run.states.resize(s_count);
    for (auto& st : run.states) {
        st.main_dists.resize(n);
        st.main_prefix_caches.resize(n);
    }
    // the first state is never scored; give it a flat leading digit
    run.states[0].main_dists[0] = TokenDistribution::uniform_digits();

    CacheHandle cache = model.fresh();
    for (int i = 0; i < len; ++i) {
        const int s = pos_state[i];
        if (s >= 0 && pos_digit[i] == 0) {
            run.states[s].state_cache = model.fork(cache);
            run.ledger.cache_hits++;
        }
        auto [dist, next] = model.next_distribution(cache, seq.tokens[i]);
        cache = next;
        run.ledger.forward_calls++;
        if (s >= 0) {
            run.states[s].realized.push_back(seq.tokens[i]);
            const int new_len = pos_digit[i] + 1;
            if (new_len < n) {
                run.states[s].main_prefix_caches[new_len] = model.fork(cache);
                run.ledger.cache_hits++;
            }
        }
        const int ni = i + 1;
        if (ni < len && pos_state[ni] >= 0) {
            run.states[pos_state[ni]].main_dists[pos_digit[ni]] =
                detail::digits_only(dist, temperature);
        }
    }
    model.release(cache);

    // coarse PDF per state: one refined chain along the realized digits
    for (int s = 0; s < s_count; ++s) {
        auto& st = run.states[s];
        HierarchyPdf& pdf = st.pdf;
        pdf.state_index = s;
        pdf.n_digits = n;
        for (long c = 0; c < 10; ++c)
            pdf.bins.push_back(make_bin(c, 1, st.main_dists[0].probs[c]));
        long chain_code = st.realized[0];
        for (int depth = 1; depth < n; ++depth) {
            auto it = std::find_if(pdf.bins.begin(), pdf.bins.end(), [&](const PdfBin& b) {
                return b.depth == depth && b.code == chain_code;
            });
            const double parent_mass = it->mass;
            pdf.bins.erase(it);
            for (long d = 0; d < 10; ++d)
                pdf.bins.push_back(make_bin(chain_code * 10 + d, depth + 1,
                                            parent_mass * st.main_dists[depth].probs[d]));
            chain_code = chain_code * 10 + st.realized[depth];
        }
        pdf.sort_bins();
    }
    return run;
}

// Recursive refinement of one state's PDF to the policy's target depth.
// Each refined bin is replaced by 10 children weighted by the model's
// conditional digit probabilities; main-branch distributions from the
// initial pass are never re-queried.
inline CallLedger recursive_refiner(StateExtraction& st, const RefinePolicy& policy,
                                    ModelBackend& model, double temperature = 1.0) {
    const int n = st.pdf.n_digits;
    if (policy.target_depth < 1 || policy.target_depth > n)
        throw param_error("recursive_refiner: target depth outside [1, n_digits]");
    CallLedger ledger;

    struct Entry {
        TokenDistribution dist;
        CacheHandle cache;
        bool has_cache = false;
    };
    std::map<std::pair<int, long>, Entry> memo;  // (depth, code) -> state after prefix

    // realized prefix codes by length
    std::vector<long> realized_code(n + 1, 0);
    for (int l = 1; l <= n; ++l)
        realized_code[l] = realized_code[l - 1] * 10 + st.realized[l - 1];

    // distribution over the digit following prefix `code` of length `len`,
    // plus the backend cache positioned after that prefix
    std::function<Entry&(int, long)> after_prefix = [&](int len, long code) -> Entry& {
        auto key = std::make_pair(len, code);
        auto found = memo.find(key);
        if (found != memo.end()) return found->second;
        Entry e;
        if (len == 0) {
            e.dist = st.main_dists[0];
            e.cache = st.state_cache;
            e.has_cache = true;
        } else if (code == realized_code[len]) {
            e.dist = st.main_dists[len];
            if (len < n) {
                e.cache = st.main_prefix_caches[len];
                e.has_cache = true;
            }
        } else {
            Entry& parent = after_prefix(len - 1, code / 10);
            if (!parent.has_cache)
                throw transport_error("recursive_refiner: missing parent cache");
            CacheHandle f = model.fork(parent.cache);
            ledger.cache_hits++;
            auto [dist, next] =
                model.next_distribution(f, static_cast<Token>(code % 10));
            ledger.forward_calls++;
            e.dist = detail::digits_only(dist, temperature);
            e.cache = next;
            e.has_cache = true;
        }
        return memo.emplace(key, std::move(e)).first->second;
    };

    for (int depth = 1; depth < policy.target_depth; ++depth) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < st.pdf.bins.size(); ++i)
            if (st.pdf.bins[i].depth == depth) candidates.push_back(i);
        if (policy.mode == RefinePolicy::Mode::TopK &&
            static_cast<int>(candidates.size()) > policy.k) {
            std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
                const auto& ba = st.pdf.bins[a];
                const auto& bb = st.pdf.bins[b];
                if (ba.mass != bb.mass) return ba.mass > bb.mass;
                return ba.lo < bb.lo;  // deterministic tie-break: lower interval first
            });
            candidates.resize(policy.k);
        }
        // split selected bins (collect new bins, then rebuild)
        std::vector<PdfBin> added;
        std::vector<bool> removed(st.pdf.bins.size(), false);
        for (std::size_t idx : candidates) {
            const PdfBin bin = st.pdf.bins[idx];
            const Entry& e = after_prefix(depth, bin.code);
            removed[idx] = true;
            for (long d = 0; d < 10; ++d)
                added.push_back(
                    make_bin(bin.code * 10 + d, depth + 1, bin.mass * e.dist.probs[d]));
        }
        std::vector<PdfBin> next;
        next.reserve(st.pdf.bins.size() + added.size());
        for (std::size_t i = 0; i < st.pdf.bins.size(); ++i)
            if (!removed[i]) next.push_back(st.pdf.bins[i]);
        next.insert(next.end(), added.begin(), added.end());
        st.pdf.bins = std::move(next);
        st.pdf.sort_bins();
    }

    if (std::abs(st.pdf.total_mass() - 1.0) > 1e-9)
        throw numerical_error("recursive_refiner: normalization drift above 1e-9");

    // drop caches created during refinement (main-branch handles stay owned
    // by the extraction run)
    for (auto& [key, e] : memo)
        if (e.has_cache && key.first > 0 && key.second != realized_code[key.first])
            model.release(e.cache);
    return ledger;
}

// Theoretical call cost of fully refining S states with n digits, beyond the
// initial sweep: S * ((10^n - 1) / 9 - n).
inline long full_refinement_calls(int n_digits, long states) {
    long pow10 = 1;
    for (int i = 0; i < n_digits; ++i) pow10 *= 10;
    return states * ((pow10 - 1) / 9 - n_digits);
}

}  // namespace ictx
