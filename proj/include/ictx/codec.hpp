#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ictx/errors.hpp"
#include "ictx/systems.hpp"

namespace ictx {

// Vocabulary: digit d <-> token id d, separator "," <-> id 10.
using Token = int;
inline constexpr Token kSeparatorToken = 10;
inline constexpr int kVocabSize = 11;

inline constexpr double kRescaleLo = 1.50;
inline constexpr double kRescaleHi = 8.50;

// Affine map y = scale * x + offset taking the observed data range onto
// [1.50, 8.50].
struct RescaleMap {
    double scale = 1.0;
    double offset = 0.0;

    double forward(double x) const { return scale * x + offset; }
    double inverse(double y) const { return (y - offset) / scale; }

    static RescaleMap identity() { return {1.0, 0.0}; }
};

inline RescaleMap fit_rescale(const Trajectory& traj) {
    traj.validate();
    const auto [lo_it, hi_it] = std::minmax_element(traj.values.begin(), traj.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo <= 0.0)
        throw param_error("fit_rescale: degenerate range (constant trajectory)");
    RescaleMap map;
    map.scale = (kRescaleHi - kRescaleLo) / (hi - lo);
    map.offset = kRescaleLo - map.scale * lo;
    return map;
}

struct DigitPrefix {
    std::vector<int> digits;

    int depth() const { return static_cast<int>(digits.size()); }
};

// Truncating (floor) encoding: the digit string is the left edge of the
// containing bin of width 10^{1-n}. One integer digit, n-1 fractional.
inline DigitPrefix encode_state(double x, const RescaleMap& map, int n_digits) {
    if (n_digits < 1 || n_digits > 9) throw param_error("encode_state: bad n_digits");
    const double y = map.forward(x);
    if (y < kRescaleLo - 1e-9 || y > kRescaleHi + 1e-9)
        throw param_error("encode_state: value outside the fitted range");
    const double unit = std::pow(10.0, n_digits - 1);
    // tiny epsilon keeps values that are mathematically on a bin edge from
    // landing one bin low through floating-point representation
    long code = static_cast<long>(std::floor(y * unit + 1e-9));
    code = std::clamp(code, 0L, static_cast<long>(unit * 10) - 1);
    DigitPrefix prefix;
    prefix.digits.resize(n_digits);
    for (int p = n_digits - 1; p >= 0; --p) {
        prefix.digits[p] = static_cast<int>(code % 10);
        code /= 10;
    }
    return prefix;
}

// Half-open interval [v, v + 10^{1-d}) covered by a digit prefix, in
// rescaled units.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

inline Interval prefix_to_interval(const DigitPrefix& prefix) {
    if (prefix.digits.empty()) return {0.0, 10.0};
    double v = 0.0;
    for (int d : prefix.digits) {
        if (d < 0 || d > 9) throw param_error("prefix_to_interval: digit out of range");
        v = v * 10.0 + d;
    }
    const double width = std::pow(10.0, 1 - prefix.depth());
    return {v * width, (v + 1.0) * width};
}

struct TokenSeq {
    std::vector<Token> tokens;
    int n_digits = 3;
    bool separators = true;
    std::vector<int> state_offsets;  // position of each state's first digit

    int states() const { return static_cast<int>(state_offsets.size()); }
};

inline TokenSeq serialize_trajectory(const Trajectory& traj, const RescaleMap& map,
                                     int n_digits, bool separators = true) {
    traj.validate();
    TokenSeq seq;
    seq.n_digits = n_digits;
    seq.separators = separators;
    const int s = static_cast<int>(traj.values.size());
    seq.tokens.reserve(s * (n_digits + 1));
    for (int i = 0; i < s; ++i) {
        if (i > 0 && separators) seq.tokens.push_back(kSeparatorToken);
        seq.state_offsets.push_back(static_cast<int>(seq.tokens.size()));
        const DigitPrefix prefix = encode_state(traj.values[i], map, n_digits);
        for (int d : prefix.digits) seq.tokens.push_back(d);
    }
    return seq;
}

// Discrete-chain serialization: one digit token per state, no separators.
// States 1..9 map directly onto the digit tokens.
inline TokenSeq serialize_chain(const Trajectory& chain) {
    chain.validate();
    TokenSeq seq;
    seq.n_digits = 1;
    seq.separators = false;
    seq.tokens.reserve(chain.values.size());
    for (double v : chain.values) {
        const int s = static_cast<int>(std::lround(v));
        if (s < 1 || s > 9 || std::abs(v - s) > 1e-9)
            throw param_error("serialize_chain: state outside {1..9}");
        seq.state_offsets.push_back(static_cast<int>(seq.tokens.size()));
        seq.tokens.push_back(s);
    }
    return seq;
}

// Bin midpoint of the full-length encoding, in original units.
inline double decode_state(const DigitPrefix& prefix, const RescaleMap& map) {
    const Interval iv = prefix_to_interval(prefix);
    return map.inverse(0.5 * (iv.lo + iv.hi));
}

}  // namespace ictx
