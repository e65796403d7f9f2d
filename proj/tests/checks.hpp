#pragma once

// Quantified property sweeps shared by the unit tests and the acceptance
// runner. Each returns a violation count (or worst error) over its draws.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "qparity/pipelines.hpp"

namespace checks {

using namespace qparity;

inline BitVector random_bits(Rng& rng, std::size_t n) {
    BitVector b(n);
    for (auto& v : b) {
        v = static_cast<std::uint8_t>(rng() >> 63);
    }
    return b;
}

inline RealVector random_angles(Rng& rng, std::size_t m) {
    RealVector t(m);
    for (auto& v : t) {
        v = (2.0 * uniform01(rng) - 1.0) * kPi;
    }
    return t;
}

/// <Z^s> on |b> against (-1)^{s.b}, compared with ==.
inline std::size_t basis_parity_violations(std::size_t trials, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::size_t bad = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = 1 + uniform_index(rng, 12);
        const auto s = random_bits(rng, n);
        const auto b = random_bits(rng, n);
        const double expect = oracle::popcount_and(s, b) % 2 ? -1.0 : 1.0;
        const double got = expect_diagonal(basis_state(b), DiagonalObservable::hard(ParityWord(s)));
        bad += got != expect;
    }
    return bad;
}

struct GradSweep {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double worst = 0.0;
};

/// Shift-rule gradients of random circuit losses against central finite
/// differences (h = 1e-5). Alternates three loss families: a weighted sum of
/// Pauli-Z expectations, squared MMD to a random target, and a nonlinear
/// function (softplus) of one expectation.
inline GradSweep shift_rule_vs_fd(std::size_t trials, std::uint64_t seed, double tol = 1e-5) {
    Rng rng = make_rng(seed);
    GradSweep out;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = 1 + uniform_index(rng, 4);
        const std::size_t layers = 1 + uniform_index(rng, 2);
        const Ansatz ansatz(n, layers);
        const auto theta = random_angles(rng, ansatz.num_params());
        const StateVector init = basis_state(random_bits(rng, n));
        const auto probs_at = [&](std::span<const double> th) {
            return born_probabilities(apply_ansatz(init, ansatz, th));
        };
        std::function<double(const std::vector<double>&)> loss;
        RealVector grad;
        const int family = static_cast<int>(t % 3);
        if (family == 0) {
            std::vector<DiagonalObservable> obs;
            RealVector w;
            for (int k = 0; k < 3; ++k) {
                obs.push_back(DiagonalObservable::hard(ParityWord(random_bits(rng, n))));
                w.push_back(normal(rng));
            }
            loss = [&, obs, w](const std::vector<double>& th) {
                const auto p = probs_at(th);
                double v = 0.0;
                for (std::size_t k = 0; k < obs.size(); ++k) {
                    v += w[k] * expect_diagonal(p, obs[k]);
                }
                return v;
            };
            grad = param_shift_grad([&](std::span<const double> th) { return loss({th.begin(), th.end()}); }, theta);
        } else if (family == 1) {
            RealVector q(std::size_t{1} << n);
            double z = 0.0;
            for (auto& v : q) {
                v = uniform01(rng);
                z += v;
            }
            for (auto& v : q) {
                v /= z;
            }
            const double h = 0.5 + uniform01(rng);
            loss = [&, q, h](const std::vector<double>& th) { return oracle::mmd(probs_at(th), q, n, h); };
            RealVector dp;
            mmd_squared(probs_at(theta), q, n, h, &dp);
            grad = param_shift_grad_probs(init, ansatz, theta, dp);
        } else {
            const auto obs = DiagonalObservable::hard(ParityWord(random_bits(rng, n)));
            const auto softplus = [](double e) { return std::log1p(std::exp(2.0 * e)); };
            loss = [&, obs](const std::vector<double>& th) { return softplus(expect_diagonal(probs_at(th), obs)); };
            const double e = expect_diagonal(probs_at(theta), obs);
            const double outer = 2.0 / (1.0 + std::exp(-2.0 * e));
            grad = param_shift_grad([&](std::span<const double> th) { return expect_diagonal(probs_at(th), obs); },
                                    theta);
            for (auto& g : grad) {
                g *= outer;
            }
        }
        const auto fd = oracle::fd_grad(loss, theta);
        const double err = oracle::rel_err(grad, fd);
        out.worst = std::max(out.worst, err);
        out.violations += !(err <= tol);
        ++out.trials;
    }
    return out;
}

/// max |soft_parity(l, b) - hard_parity(threshold(l), b)| over all b, n <= 8,
/// with every |l_i| >= 20.
inline double saturated_soft_hard_gap(std::size_t rows_per_width, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    double worst = 0.0;
    for (std::size_t n = 1; n <= 8; ++n) {
        for (std::size_t r = 0; r < rows_per_width; ++r) {
            RealVector l(n);
            for (auto& v : l) {
                v = ((rng() >> 63) ? 1.0 : -1.0) * (20.0 + 40.0 * uniform01(rng));
            }
            const auto w = threshold_row(l);
            for (std::size_t idx = 0; idx < (std::size_t{1} << n); ++idx) {
                const auto b = index_to_bits(idx, n);
                worst = std::max(worst, std::abs(soft_parity(l, 1.0, b) - hard_parity(w, b)));
            }
        }
    }
    return worst;
}

/// Random linear or parity surrogate over n inputs.
inline SurrogateGrad random_surrogate(Rng& rng, std::size_t n, bool parity) {
    if (!parity) {
        LinearHead head(2, n);
        for (auto& v : head.weights.data()) {
            v = normal(rng);
        }
        head.bias = {normal(rng), normal(rng)};
        return linear_surrogate(head);
    }
    const std::size_t K = 1 + uniform_index(rng, 6);
    std::vector<ParityWord> words;
    WordLogits wl{Matrix(K, n), 1.0};
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            wl.logits(k, i) = normal(rng, 0.0, 3.0);
        }
        words.push_back(threshold_row(wl.logits.row(k)));
    }
    LinearHead head(2, K);
    for (auto& v : head.weights.data()) {
        v = normal(rng);
    }
    return parity_surrogate(words, head, &wl);
}

struct RoundingSweep {
    std::size_t trials = 0;
    std::size_t input_violations = 0;      // round(fgsm(x)) != x
    std::size_t prediction_violations = 0; // defended prediction != clean prediction
};

/// round(fgsm(x, eps)) == x bitwise for binary x and eps < 1/2, over random
/// inputs, surrogates (linear and soft parity) and budgets. The prediction
/// check uses a random deployed parity classifier.
inline RoundingSweep rounding_exactness(std::size_t trials, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    RoundingSweep out;
    const RealVector grid{0.1, 0.2, 0.3, 0.49};
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = 1 + uniform_index(rng, 16);
        const auto b = random_bits(rng, n);
        const RealVector x(b.begin(), b.end());
        const int y = static_cast<int>(rng() >> 63);
        const auto sur = random_surrogate(rng, n, (t & 1) != 0);
        const double eps = (t % 2 == 0) ? grid[(t / 2) % grid.size()] : 0.4999 * uniform01(rng);
        const auto adv = fgsm_attack(sur, x, y, eps);
        const auto back = round_binary(adv);
        out.input_violations += back != x;
        DeployedParityClassifier clf{n, {ParityWord(random_bits(rng, n)), ParityWord(random_bits(rng, n))},
                                     LinearHead(2, 2), 1.0};
        for (auto& v : clf.head.weights.data()) {
            v = normal(rng);
        }
        out.prediction_violations += clf.predict_real(adv) != clf.predict(b);
        ++out.trials;
    }
    return out;
}

/// compute_moments(Q) == compute_moments(D) bitwise with an L = 0 ansatz.
inline std::size_t moment_equivalence_violations(std::size_t trials, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::size_t bad = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = 1 + uniform_index(rng, 10);
        LabeledBitDataset ds{n, {}, {}, 2};
        const std::size_t rows = 1 + uniform_index(rng, 40);
        for (std::size_t j = 0; j < rows; ++j) {
            ds.samples.push_back(random_bits(rng, n));
            ds.labels.push_back(static_cast<int>(rng() >> 63));
        }
        std::vector<ParityWord> words;
        const std::size_t K = 1 + uniform_index(rng, 12);
        for (std::size_t k = 0; k < K; ++k) {
            words.push_back(ParityWord(random_bits(rng, n)));
        }
        const Ansatz empty(n, 0);
        const RealVector theta;
        const auto d = compute_moments(Source::D, words, ds);
        const auto q = compute_moments(Source::Q, words, ds, &theta, &empty);
        bad += d.data() != q.data();
    }
    return bad;
}

struct UnitCheck {
    std::string name;
    double value;
    double expected;
    double tol;
    [[nodiscard]] bool ok() const { return std::abs(value - expected) <= tol; }
};

/// Closed-form loss values.
inline std::vector<UnitCheck> loss_units() {
    std::vector<UnitCheck> out;
    {
        Rng rng = make_rng(1);
        RealVector p(1 << 6);
        double z = 0.0;
        for (auto& v : p) {
            v = uniform01(rng);
            z += v;
        }
        for (auto& v : p) {
            v /= z;
        }
        out.push_back({"mmd(identical)", mmd_squared(p, p, 6, 1.5), 0.0, 1e-12});
    }
    {
        Matrix m(2, 3);
        for (std::size_t k = 0; k < 3; ++k) {
            m(0, k) = m(1, k) = 0.37 * static_cast<double>(k);
        }
        out.push_back({"disc(equal means)", disc_loss(m), 0.0, 0.0});
    }
    {
        WordLogits wl{Matrix(1, 5), 1.0};
        wl.logits(0, 2) = 3.0;
        out.push_back({"div(single word)", diversity_penalty(wl), 0.0, 0.0});
    }
    {
        Matrix f(2, 1);
        f(0, 0) = 1.0;
        f(1, 0) = -1.0;
        const std::vector<int> y{0, 1};
        out.push_back({"sep(K=1, means +-1)", class_separation_penalty(f, y, 2), -4.0, 1e-12});
    }
    {
        Matrix logits(4, 2);
        const std::vector<int> y{0, 1, 1, 0};
        out.push_back({"ce(uniform binary)", cross_entropy(logits, y), std::log(2.0), 1e-10});
    }
    return out;
}

} // namespace checks
