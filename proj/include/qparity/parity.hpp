#pragma once

// Hard and relaxed parity features, word thresholding/enumeration, and the
// classical word-ranking oracles (inter-class variance, Bonferroni z-tests).

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "qparity/core.hpp"
#include "qparity/datasets.hpp"

namespace qparity {

/// A parity word s in {0,1}^n; its order is the Hamming weight.
struct ParityWord {
    BitVector bits;

    ParityWord() = default;
    explicit ParityWord(BitVector b) : bits(std::move(b)) {}
    static ParityWord from_string(std::string_view s) { return ParityWord(bits_from_string(s)); }

    [[nodiscard]] std::size_t size() const { return bits.size(); }
    [[nodiscard]] std::size_t order() const { return popcount(bits); }
    [[nodiscard]] bool empty_word() const { return order() == 0; }
    [[nodiscard]] std::string str() const { return bits_to_string(bits); }

    bool operator==(const ParityWord&) const = default;
    auto operator<=>(const ParityWord&) const = default;
};

/// (order, lexicographic bit string) ordering used for ranking ties and enumeration.
inline bool word_order_less(const ParityWord& a, const ParityWord& b) {
    const auto oa = a.order();
    const auto ob = b.order();
    if (oa != ob) {
        return oa < ob;
    }
    return a.bits < b.bits;
}

// ============================================================== hard parity

inline int hard_parity(const ParityWord& word, std::span<const std::uint8_t> b) {
    require_same_size(word.size(), b.size(), "hard_parity");
    unsigned acc = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        acc ^= static_cast<unsigned>(word.bits[i] & b[i]);
    }
    return acc ? -1 : 1;
}

namespace detail {

inline std::uint64_t pack64(std::span<const std::uint8_t> bits) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        v |= static_cast<std::uint64_t>(bits[i] != 0) << i;
    }
    return v;
}

} // namespace detail

/// D-moment feature map: entry (j, k) = hard parity of word k on sample j.
inline Matrix empirical_parity_features(const LabeledBitDataset& ds, std::span<const ParityWord> words) {
    for (const auto& w : words) {
        require_same_size(w.size(), ds.n, "parity word width");
    }
    Matrix f(ds.size(), words.size());
    if (ds.n <= 64) {
        std::vector<std::uint64_t> packed_words;
        packed_words.reserve(words.size());
        for (const auto& w : words) {
            packed_words.push_back(detail::pack64(w.bits));
        }
        for (std::size_t j = 0; j < ds.size(); ++j) {
            const auto b = detail::pack64(ds.samples[j]);
            auto row = f.row(j);
            for (std::size_t k = 0; k < words.size(); ++k) {
                row[k] = (std::popcount(b & packed_words[k]) & 1) ? -1.0 : 1.0;
            }
        }
    } else {
        for (std::size_t j = 0; j < ds.size(); ++j) {
            for (std::size_t k = 0; k < words.size(); ++k) {
                f(j, k) = hard_parity(words[k], ds.samples[j]);
            }
        }
    }
    return f;
}

// ============================================================== soft parity

/// Evaluates prod_i cos(pi * p_i * x_i) for participations p and (possibly
/// real-valued) inputs x. Optional outputs receive d/dp_i and d/dx_i.
inline double soft_parity_participation(std::span<const double> p, std::span<const double> x,
                                        std::span<double> d_dp = {}, std::span<double> d_dx = {}) {
    require_same_size(p.size(), x.size(), "soft_parity");
    const std::size_t n = p.size();
    const bool grads = !d_dp.empty() || !d_dx.empty();
    if (!grads) {
        double v = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (x[i] != 0.0) {
                v *= std::cos(kPi * p[i] * x[i]);
            }
        }
        return v;
    }
    // prefix/suffix products avoid dividing by a vanishing cosine.
    std::vector<double> factor(n), prefix(n + 1, 1.0), suffix(n + 1, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        factor[i] = std::cos(kPi * p[i] * x[i]);
        prefix[i + 1] = prefix[i] * factor[i];
    }
    for (std::size_t i = n; i-- > 0;) {
        suffix[i] = suffix[i + 1] * factor[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double others = prefix[i] * suffix[i + 1];
        const double s = std::sin(kPi * p[i] * x[i]);
        if (!d_dp.empty()) {
            d_dp[i] = -kPi * x[i] * s * others;
        }
        if (!d_dx.empty()) {
            d_dx[i] = -kPi * p[i] * s * others;
        }
    }
    return prefix[n];
}

inline RealVector participation(std::span<const double> logit_row, double tau) {
    RealVector p(logit_row.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = sigmoid(tau * logit_row[i]);
    }
    return p;
}

/// Relaxed parity prod_i cos(pi * sigmoid(tau * l_i) * b_i).
inline double soft_parity(std::span<const double> logit_row, double tau, std::span<const std::uint8_t> b) {
    require_same_size(logit_row.size(), b.size(), "soft_parity");
    if (!(tau > 0.0)) {
        throw ConfigError("soft_parity: temperature must be positive");
    }
    double v = 1.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i]) {
            v *= std::cos(kPi * sigmoid(tau * logit_row[i]));
        }
    }
    return v;
}

/// soft_parity plus its gradient with respect to the logits.
inline double soft_parity_grad(std::span<const double> logit_row, double tau, std::span<const std::uint8_t> b,
                               std::span<double> grad) {
    require_same_size(logit_row.size(), b.size(), "soft_parity_grad");
    require_same_size(grad.size(), b.size(), "soft_parity_grad output");
    const std::size_t n = b.size();
    RealVector p = participation(logit_row, tau);
    RealVector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = b[i];
    }
    const double v = soft_parity_participation(p, x, grad);
    for (std::size_t i = 0; i < n; ++i) {
        grad[i] *= tau * p[i] * (1.0 - p[i]);
    }
    return v;
}

// ============================================================== word logits

struct WordLogits {
    Matrix logits; // K_pool x n
    double tau = 1.0;

    [[nodiscard]] std::size_t pool_size() const { return logits.rows(); }
    [[nodiscard]] std::size_t width() const { return logits.cols(); }

    void validate() const {
        if (!(tau > 0.0)) {
            throw ConfigError("word logits: temperature must be positive");
        }
        for (double v : logits.data()) {
            if (!std::isfinite(v)) {
                throw NumericalError("word logits: non-finite entry");
            }
        }
    }
};

/// s_{k,i} = 1 iff sigmoid(l_{k,i}) > 0.5, i.e. l_{k,i} > 0 strictly.
inline ParityWord threshold_row(std::span<const double> row) {
    BitVector b(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        b[i] = row[i] > 0.0;
    }
    return ParityWord(std::move(b));
}

inline std::vector<ParityWord> threshold_words(const WordLogits& wl) {
    std::vector<ParityWord> out;
    out.reserve(wl.pool_size());
    for (std::size_t k = 0; k < wl.pool_size(); ++k) {
        out.push_back(threshold_row(wl.logits.row(k)));
    }
    return out;
}

// ============================================================== enumeration

inline constexpr std::size_t kDefaultWordCap = 1'000'000;

inline double count_words(std::size_t n, std::size_t max_order) {
    double total = 0.0;
    double c = 1.0;
    for (std::size_t r = 1; r <= std::min(n, max_order); ++r) {
        c = c * static_cast<double>(n - r + 1) / static_cast<double>(r);
        total += c;
    }
    return total;
}

/// All nonzero words of order <= max_order, sorted by (order, bit string).
inline std::vector<ParityWord> enumerate_words(std::size_t n, std::size_t max_order,
                                               std::size_t cap = kDefaultWordCap) {
    const double count = count_words(n, max_order);
    if (count > static_cast<double>(cap)) {
        throw CapacityError("enumerate_words: " + std::to_string(static_cast<long double>(count)) +
                            " candidate words exceed the cap of " + std::to_string(cap));
    }
    std::vector<ParityWord> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::size_t r = 1; r <= std::min(n, max_order); ++r) {
        // Lexicographic (0 < 1) order over strings with r ones = reverse
        // colexicographic walk starting from the ones packed to the right.
        std::vector<ParityWord> level;
        BitVector mask(n, 0);
        std::fill(mask.end() - static_cast<std::ptrdiff_t>(r), mask.end(), 1);
        do {
            level.emplace_back(mask);
        } while (std::next_permutation(mask.begin(), mask.end()));
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

// ============================================================== ranking

struct WordScore {
    ParityWord word;
    double score = 0.0;    // normalized so the top entry is 1
    double variance = 0.0; // raw population variance of class means
};

namespace detail {

inline std::vector<std::size_t> class_counts(const LabeledBitDataset& ds) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(ds.num_classes), 0);
    for (int y : ds.labels) {
        ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

/// Class means of each feature column: C x K.
inline Matrix class_means(const Matrix& features, std::span<const int> labels, int num_classes) {
    Matrix means(static_cast<std::size_t>(num_classes), features.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t j = 0; j < features.rows(); ++j) {
        const auto c = static_cast<std::size_t>(labels[j]);
        ++counts[c];
        auto row = features.row(j);
        auto m = means.row(c);
        for (std::size_t k = 0; k < row.size(); ++k) {
            m[k] += row[k];
        }
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            for (auto& v : means.row(c)) {
                v /= static_cast<double>(counts[c]);
            }
        }
    }
    return means;
}

} // namespace detail

/// Ranks words by the population variance over classes of their class-mean
/// hard parity; ties go to lower order, then lexicographic bits.
inline std::vector<WordScore> variance_rank(const LabeledBitDataset& ds, std::span<const ParityWord> words) {
    auto counts = detail::class_counts(ds);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw SchemaError("variance_rank: class " + std::to_string(c) + " has no samples");
        }
    }
    const Matrix f = empirical_parity_features(ds, words);
    const Matrix means = detail::class_means(f, ds.labels, ds.num_classes);
    const auto C = static_cast<double>(ds.num_classes);
    std::vector<WordScore> out;
    out.reserve(words.size());
    double top = 0.0;
    for (std::size_t k = 0; k < words.size(); ++k) {
        double mu = 0.0;
        for (std::size_t c = 0; c < means.rows(); ++c) {
            mu += means(c, k);
        }
        mu /= C;
        double var = 0.0;
        for (std::size_t c = 0; c < means.rows(); ++c) {
            var += (means(c, k) - mu) * (means(c, k) - mu);
        }
        var /= C;
        top = std::max(top, var);
        out.push_back({words[k], 0.0, var});
    }
    for (auto& ws : out) {
        ws.score = top > 0.0 ? ws.variance / top : 0.0;
    }
    std::stable_sort(out.begin(), out.end(), [](const WordScore& a, const WordScore& b) {
        if (a.variance != b.variance) {
            return a.variance > b.variance;
        }
        return word_order_less(a.word, b.word);
    });
    return out;
}

struct SelectedWord {
    ParityWord word;
    double statistic = 0.0; // max |z| over one-vs-rest comparisons
    double p_value = 1.0;
};

/// Order 1..max_order candidates kept when their best one-vs-rest two-sample
/// z-test on class means passes p < alpha / (#candidates).
inline std::vector<SelectedWord> bonferroni_select_scored(const LabeledBitDataset& ds, std::size_t max_order,
                                                          double alpha, std::size_t cap = kDefaultWordCap) {
    const auto words = enumerate_words(ds.n, max_order, cap);
    if (words.empty()) {
        return {};
    }
    const Matrix f = empirical_parity_features(ds, words);
    const auto counts = detail::class_counts(ds);
    const double threshold = alpha / static_cast<double>(words.size());
    const std::size_t total = ds.size();
    std::vector<SelectedWord> out;
    for (std::size_t k = 0; k < words.size(); ++k) {
        double sum_all = 0.0;
        std::vector<double> sum_c(counts.size(), 0.0);
        for (std::size_t j = 0; j < total; ++j) {
            sum_all += f(j, k);
            sum_c[static_cast<std::size_t>(ds.labels[j])] += f(j, k);
        }
        double best_z = 0.0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            const std::size_t n1 = counts[c];
            const std::size_t n2 = total - n1;
            if (n1 < 2 || n2 < 2) {
                continue;
            }
            const double m1 = sum_c[c] / static_cast<double>(n1);
            const double m2 = (sum_all - sum_c[c]) / static_cast<double>(n2);
            // +-1 features: sample variance = n/(n-1) * (1 - mean^2).
            const double v1 = (1.0 - m1 * m1) * static_cast<double>(n1) / static_cast<double>(n1 - 1);
            const double v2 = (1.0 - m2 * m2) * static_cast<double>(n2) / static_cast<double>(n2 - 1);
            const double se = std::sqrt(std::max(0.0, v1 / static_cast<double>(n1) + v2 / static_cast<double>(n2)));
            const double diff = std::abs(m1 - m2);
            double z = 0.0;
            if (se > 0.0) {
                z = diff / se;
            } else if (diff > 0.0) {
                z = std::numeric_limits<double>::infinity();
            }
            best_z = std::max(best_z, z);
        }
        const double p = std::erfc(best_z / std::sqrt(2.0));
        if (p < threshold) {
            out.push_back({words[k], best_z, p});
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const SelectedWord& a, const SelectedWord& b) { return a.statistic > b.statistic; });
    return out;
}

inline std::vector<ParityWord> bonferroni_select(const LabeledBitDataset& ds, std::size_t max_order, double alpha,
                                                 std::size_t cap = kDefaultWordCap) {
    std::vector<ParityWord> out;
    for (auto& s : bonferroni_select_scored(ds, max_order, alpha, cap)) {
        out.push_back(std::move(s.word));
    }
    return out;
}

// ============================================================== word lists

inline void write_words(std::ostream& out, std::span<const ParityWord> words) {
    for (const auto& w : words) {
        out << w.str() << '\n';
    }
}

inline std::vector<ParityWord> read_words(std::istream& in) {
    std::vector<ParityWord> out;
    std::string line;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto w = ParityWord::from_string(line);
        if (!out.empty() && w.size() != width) {
            throw ParseError("word list: mixed word widths");
        }
        width = w.size();
        out.push_back(std::move(w));
    }
    return out;
}

} // namespace qparity
