#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ictx/codec.hpp"
#include "ictx/errors.hpp"
#include "ictx/systems.hpp"

namespace ictx {

// ---------------------------------------------------------------------------
// Token distributions
// ---------------------------------------------------------------------------

struct TokenDistribution {
    std::array<double, kVocabSize> probs{};
    int context_position = -1;

    double sum() const {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    }

    void normalize() {
        const double s = sum();
        if (s <= 0.0) throw numerical_error("TokenDistribution: zero total mass");
        for (double& p : probs) p /= s;
    }

    int argmax() const {
        int best = 0;
        for (int i = 1; i < kVocabSize; ++i)
            if (probs[i] > probs[best]) best = i;
        return best;
    }

    double entropy() const {
        double h = 0.0;
        for (double p : probs)
            if (p > 0.0) h -= p * std::log(p);
        return h;
    }

    static TokenDistribution uniform_digits() {
        TokenDistribution d;
        for (int i = 0; i < 10; ++i) d.probs[i] = 0.1;
        return d;
    }

    static TokenDistribution one_hot(Token t) {
        TokenDistribution d;
        d.probs[t] = 1.0;
        return d;
    }
};

inline TokenDistribution restrict_and_renormalize(const TokenDistribution& dist,
                                                  const std::vector<Token>& allowed) {
    if (allowed.empty()) throw param_error("restrict_and_renormalize: empty allowed set");
    TokenDistribution out;
    out.context_position = dist.context_position;
    double s = 0.0;
    for (Token t : allowed) {
        if (t < 0 || t >= kVocabSize) throw param_error("restrict_and_renormalize: bad token");
        out.probs[t] = dist.probs[t];
        s += dist.probs[t];
    }
    if (s <= 0.0)
        throw numerical_error("restrict_and_renormalize: zero mass on allowed tokens");
    for (Token t : allowed) out.probs[t] /= s;
    return out;
}

inline std::vector<Token> digit_tokens() {
    return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
}

// p_i(T) proportional to p_i^{1/T}.
inline TokenDistribution apply_temperature(const TokenDistribution& dist, double temperature) {
    if (!(temperature > 0.0)) throw param_error("apply_temperature: T must be positive");
    TokenDistribution out;
    out.context_position = dist.context_position;
    // scale in log space from the max for numerical stability
    double mx = 0.0;
    for (double p : dist.probs) mx = std::max(mx, p);
    if (mx <= 0.0) throw numerical_error("apply_temperature: zero distribution");
    for (int i = 0; i < kVocabSize; ++i) {
        out.probs[i] =
            dist.probs[i] > 0.0
                ? std::exp(std::log(dist.probs[i] / mx) / temperature)
                : 0.0;
    }
    out.normalize();
    return out;
}

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

// Binds a processed token prefix to reusable backend state. Handles are
// single-owner: next_distribution consumes its input handle and returns the
// extended one; fork is the only way to share a prefix.
struct CacheHandle {
    std::uint64_t id = 0;
    int prefix_len = 0;
};

class ModelBackend {
  public:
    virtual ~ModelBackend() = default;

    // Empty-context handle.
    virtual CacheHandle fresh() = 0;

    // Appends `token` to the cached prefix; returns the distribution over the
    // following token and the extended handle. Exactly one forward evaluation.
    virtual std::pair<TokenDistribution, CacheHandle> next_distribution(const CacheHandle& cache,
                                                                        Token token) = 0;

    // Independent copy of the cached prefix; no forward evaluation.
    virtual CacheHandle fork(const CacheHandle& cache) = 0;

    virtual void release(const CacheHandle& cache) { (void)cache; }

    long call_count() const { return calls_.load(); }
    long fork_count() const { return forks_.load(); }

  protected:
    void record_call() { calls_.fetch_add(1); }
    void record_fork() { forks_.fetch_add(1); }

  private:
    std::atomic<long> calls_{0};
    std::atomic<long> forks_{0};
};

// ---------------------------------------------------------------------------
// Exact oracle over ground-truth kernels
// ---------------------------------------------------------------------------

// Kernel restated in rescaled (digit) units.
inline TransitionKernel rescale_kernel(const TransitionKernel& k, const RescaleMap& map) {
    switch (k.kind) {
        case TransitionKernel::Kind::Gaussian:
            return TransitionKernel::gaussian(map.forward(k.mean), map.scale * k.std);
        case TransitionKernel::Kind::Dirac:
            return TransitionKernel::dirac(map.forward(k.point));
        case TransitionKernel::Kind::Uniform:
            return TransitionKernel::uniform(map.forward(k.lo), map.forward(k.hi));
        case TransitionKernel::Kind::CategoricalRow:
            return k;  // discrete chains use the identity map
    }
    return k;
}

// Mass on [a, b), truncated to the representable range [1.50, 8.50] for
// continuous kernels (the codec cannot emit values outside it).
inline double kernel_mass_truncated(const TransitionKernel& k, double a, double b) {
    if (k.kind == TransitionKernel::Kind::Gaussian ||
        k.kind == TransitionKernel::Kind::Uniform) {
        a = std::max(a, kRescaleLo);
        b = std::min(b, kRescaleHi + 1e-12);
        if (b <= a) return 0.0;
        const double total = kernel_mass(k, kRescaleLo, kRescaleHi + 1e-12);
        if (total <= 0.0) return 0.0;
        return kernel_mass(k, a, b) / total;
    }
    return kernel_mass(k, a, b);
}

// Conditional distribution of the next digit given a digit prefix, computed
// from the kernel's CDF. `kernel` must already be in rescaled units.
// Separator probability is zero mid-state and one after the final digit.
inline TokenDistribution oracle_digit_distribution(const TransitionKernel& kernel,
                                                   const DigitPrefix& prefix, int n_digits) {
    if (prefix.depth() >= n_digits)
        throw param_error("oracle_digit_distribution: prefix already complete");
    const Interval parent_iv = prefix_to_interval(prefix);
    const double parent = kernel_mass_truncated(kernel, parent_iv.lo, parent_iv.hi);
    TokenDistribution out;
    if (parent <= 1e-300) return TokenDistribution::uniform_digits();  // degenerate branch
    for (int d = 0; d < 10; ++d) {
        DigitPrefix child = prefix;
        child.digits.push_back(d);
        const Interval iv = prefix_to_interval(child);
        out.probs[d] = kernel_mass_truncated(kernel, iv.lo, iv.hi) / parent;
    }
    out.normalize();
    return out;
}

// Backend that answers digit queries exactly from per-state ground-truth
// kernels (already rescaled). Serves as the exactness reference for the
// extraction pipeline.
class OracleBackend : public ModelBackend {
  public:
    OracleBackend(std::vector<TransitionKernel> kernels, int n_digits, bool separators)
        : kernels_(std::move(kernels)), n_digits_(n_digits), separators_(separators) {}

    CacheHandle fresh() override {
        std::lock_guard lock(mu_);
        const std::uint64_t id = next_id_++;
        states_[id] = State{};
        return {id, 0};
    }

    std::pair<TokenDistribution, CacheHandle> next_distribution(const CacheHandle& cache,
                                                                Token token) override {
        std::lock_guard lock(mu_);
        State& st = lookup(cache);
        if (token < 0 || token >= kVocabSize)
            throw param_error("OracleBackend: token outside vocabulary");
        consume(st, token);
        record_call();
        TokenDistribution dist = predict(st);
        dist.context_position = cache.prefix_len;
        State moved = st;
        states_.erase(cache.id);
        const std::uint64_t id = next_id_++;
        states_[id] = moved;
        return {dist, CacheHandle{id, cache.prefix_len + 1}};
    }

    CacheHandle fork(const CacheHandle& cache) override {
        std::lock_guard lock(mu_);
        const State st = lookup(cache);
        record_fork();
        const std::uint64_t id = next_id_++;
        states_[id] = st;
        return {id, cache.prefix_len};
    }

    void release(const CacheHandle& cache) override {
        std::lock_guard lock(mu_);
        states_.erase(cache.id);
    }

  private:
    struct State {
        std::size_t state_index = 0;        // state currently being typed
        std::vector<int> digits;            // its digits so far
    };

    State& lookup(const CacheHandle& cache) {
        auto it = states_.find(cache.id);
        if (it == states_.end()) throw param_error("OracleBackend: unknown cache handle");
        return it->second;
    }

    void consume(State& st, Token token) {
        if (token == kSeparatorToken) {
            if (!separators_ || static_cast<int>(st.digits.size()) != n_digits_)
                throw param_error("OracleBackend: unexpected separator");
            st.state_index++;
            st.digits.clear();
            return;
        }
        st.digits.push_back(token);
        if (!separators_ && static_cast<int>(st.digits.size()) == n_digits_) {
            st.state_index++;
            st.digits.clear();
        }
    }

    TokenDistribution predict(const State& st) const {
        if (separators_ && static_cast<int>(st.digits.size()) == n_digits_)
            return TokenDistribution::one_hot(kSeparatorToken);
        // the first state has no conditioning context; any valid
        // distribution will do since state 0 is never scored
        if (st.state_index == 0 || st.state_index >= kernels_.size())
            return TokenDistribution::uniform_digits();
        DigitPrefix prefix;
        prefix.digits = st.digits;
        return oracle_digit_distribution(kernels_[st.state_index], prefix, n_digits_);
    }

    std::vector<TransitionKernel> kernels_;
    int n_digits_;
    bool separators_;
    std::mutex mu_;
    std::uint64_t next_id_ = 1;
    std::unordered_map<std::uint64_t, State> states_;
};

// ---------------------------------------------------------------------------
// Count-based n-gram models
// ---------------------------------------------------------------------------

// Add-alpha smoothed unigram/bigram over an integer symbol alphabet.
struct NgramModel {
    int order = 2;  // 1 = unigram, 2 = bigram
    int vocab = 0;
    double alpha = 0.5;
    std::vector<double> unigram_counts;
    std::vector<std::vector<double>> bigram_counts;
    double total = 0.0;
    int prev = -1;

    NgramModel(int order_, int vocab_, double alpha_)
        : order(order_), vocab(vocab_), alpha(alpha_),
          unigram_counts(vocab_, 0.0),
          bigram_counts(vocab_, std::vector<double>(vocab_, 0.0)) {
        if (order != 1 && order != 2) throw param_error("NgramModel: order must be 1 or 2");
        if (vocab < 1) throw param_error("NgramModel: empty vocabulary");
    }

    void observe(int sym) {
        if (sym < 0 || sym >= vocab) throw param_error("NgramModel: symbol outside vocabulary");
        unigram_counts[sym] += 1.0;
        total += 1.0;
        if (prev >= 0) bigram_counts[prev][sym] += 1.0;
        prev = sym;
    }

    // Smoothed conditional row (bigram) or marginal (unigram).
    std::vector<double> predict(int context) const {
        std::vector<double> p(vocab, 0.0);
        if (order == 1) {
            const double denom = total + alpha * vocab;
            for (int j = 0; j < vocab; ++j) p[j] = (unigram_counts[j] + alpha) / denom;
        } else {
            if (context < 0 || context >= vocab)
                throw param_error("NgramModel: bad context symbol");
            double row_total = 0.0;
            for (double c : bigram_counts[context]) row_total += c;
            const double denom = row_total + alpha * vocab;
            for (int j = 0; j < vocab; ++j)
                p[j] = (bigram_counts[context][j] + alpha) / denom;
        }
        return p;
    }
};

inline NgramModel fit_ngram(const std::vector<int>& symbols, int order, int vocab,
                            double alpha = 0.5) {
    if (symbols.empty()) throw param_error("fit_ngram: empty sequence");
    if (static_cast<int>(symbols.size()) < order)
        throw param_error("fit_ngram: sequence shorter than the model order");
    NgramModel model(order, vocab, alpha);
    for (int s : symbols) model.observe(s);
    return model;
}

// In-context n-gram backend over the token vocabulary: counts accumulate as
// tokens are consumed, the prediction is the smoothed conditional of the
// last token. Valid predictions are confined to `alphabet`.
class NgramBackend : public ModelBackend {
  public:
    NgramBackend(int order, std::vector<Token> alphabet, double alpha = 0.5)
        : order_(order), alphabet_(std::move(alphabet)), alpha_(alpha) {
        if (alphabet_.empty()) throw param_error("NgramBackend: empty alphabet");
        index_.assign(kVocabSize, -1);
        for (std::size_t i = 0; i < alphabet_.size(); ++i) index_[alphabet_[i]] = i;
    }

    CacheHandle fresh() override {
        std::lock_guard lock(mu_);
        const std::uint64_t id = next_id_++;
        states_.emplace(id, NgramModel(order_, static_cast<int>(alphabet_.size()), alpha_));
        return {id, 0};
    }

    std::pair<TokenDistribution, CacheHandle> next_distribution(const CacheHandle& cache,
                                                                Token token) override {
        std::lock_guard lock(mu_);
        auto it = states_.find(cache.id);
        if (it == states_.end()) throw param_error("NgramBackend: unknown cache handle");
        NgramModel model = it->second;
        states_.erase(it);
        if (token < 0 || token >= kVocabSize || index_[token] < 0)
            throw param_error("NgramBackend: token outside alphabet");
        model.observe(index_[token]);
        record_call();
        const auto row = model.predict(model.prev);
        TokenDistribution dist;
        dist.context_position = cache.prefix_len;
        for (std::size_t i = 0; i < alphabet_.size(); ++i) dist.probs[alphabet_[i]] = row[i];
        const std::uint64_t id = next_id_++;
        states_.emplace(id, std::move(model));
        return {dist, CacheHandle{id, cache.prefix_len + 1}};
    }

    CacheHandle fork(const CacheHandle& cache) override {
        std::lock_guard lock(mu_);
        auto it = states_.find(cache.id);
        if (it == states_.end()) throw param_error("NgramBackend: unknown cache handle");
        record_fork();
        const std::uint64_t id = next_id_++;
        states_.emplace(id, it->second);
        return {id, cache.prefix_len};
    }

    void release(const CacheHandle& cache) override {
        std::lock_guard lock(mu_);
        states_.erase(cache.id);
    }

  private:
    int order_;
    std::vector<Token> alphabet_;
    double alpha_;
    std::vector<int> index_;
    std::mutex mu_;
    std::uint64_t next_id_ = 1;
    std::unordered_map<std::uint64_t, NgramModel> states_;
};

}  // namespace ictx
