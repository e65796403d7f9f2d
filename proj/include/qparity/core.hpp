#pragma once

// Shared vocabulary types: bit vectors, a small dense matrix, error types
// and the handful of scalar helpers every module needs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qparity {

inline constexpr double kPi = std::numbers::pi;

/// Bit vectors store one bit per byte; widths here are small (≤ a few hundred).
using BitVector = std::vector<std::uint8_t>;
using RealVector = std::vector<double>;

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
    using Error::Error;
};
struct CapacityError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct FitError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};
/// Invalid user-supplied configuration or arguments.
struct ConfigError : Error {
    using Error::Error;
};

inline void require_same_size(std::size_t a, std::size_t b, std::string_view what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

// ---------------------------------------------------------------- scalars

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// sign with sign(0) = 0.
inline double sign0(double x) { return (x > 0.0) - (x < 0.0); }

// ---------------------------------------------------------------- bits

inline BitVector bits_from_string(std::string_view text) {
    BitVector out;
    out.reserve(text.size());
    for (char ch : text) {
        if (ch == '0' || ch == '1') {
            out.push_back(static_cast<std::uint8_t>(ch - '0'));
        } else {
            throw ParseError("invalid bit character '" + std::string(1, ch) + "' in \"" +
                             std::string(text) + "\"");
        }
    }
    return out;
}

inline std::string bits_to_string(std::span<const std::uint8_t> bits) {
    std::string out(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i) {
        out[i] = bits[i] ? '1' : '0';
    }
    return out;
}

/// Little-endian basis index: bit i carries weight 2^i.
inline std::size_t bits_to_index(std::span<const std::uint8_t> bits) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) {
            idx |= std::size_t{1} << i;
        }
    }
    return idx;
}

inline BitVector index_to_bits(std::size_t index, std::size_t n) {
    BitVector out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<std::uint8_t>((index >> i) & 1U);
    }
    return out;
}

inline std::size_t popcount(std::span<const std::uint8_t> bits) {
    std::size_t c = 0;
    for (auto b : bits) {
        c += b != 0;
    }
    return c;
}

// ---------------------------------------------------------------- matrix

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() { return data_; }
    [[nodiscard]] const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------- rng

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

/// Portable uniform double in [0,1) from the engine's top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Box-Muller normal draw; avoids implementation-defined std::normal_distribution.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

/// Uniform integer in [0, bound) without modulo bias.
inline std::size_t uniform_index(Rng& rng, std::size_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r = rng();
    while (r >= limit) {
        r = rng();
    }
    return static_cast<std::size_t>(r % bound);
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
    }
}

// ---------------------------------------------------------------- stats

struct Summary {
    double mean = 0.0;
    double std = 0.0; // population
    double best = 0.0;
};

inline Summary summarize(std::span<const double> values) {
    Summary s;
    if (values.empty()) {
        return s;
    }
    double sum = 0.0;
    s.best = values[0];
    for (double v : values) {
        sum += v;
        s.best = std::max(s.best, v);
    }
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

} // namespace qparity
