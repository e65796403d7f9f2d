#pragma once

// Training objectives and their analytic gradients, the soft-to-hard
// temperature schedule, and Adam/AdamW with cosine learning-rate annealing.

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qparity/core.hpp"
#include "qparity/datasets.hpp"
#include "qparity/parity.hpp"

namespace qparity {

struct LossWeights {
    double lambda = 1.0; // discriminative reward in the native-binary objective
    double alpha = 1.0;  // diversity
    double beta = 0.01;  // sparsity
    double gamma = 2.0;  // class separation
    double dw = 0.0;     // native-binary diversity weight

    void validate() const {
        for (double v : {lambda, alpha, beta, gamma, dw}) {
            if (!std::isfinite(v)) {
                throw ConfigError("loss weights must be finite");
            }
        }
    }
};

// ============================================================== MMD

enum class MmdMode { Exact, Sampled };

/// Gaussian kernel over Hamming distance, k(b, b') = exp(-d_H(b, b') / h).
struct MmdConfig {
    double bandwidth = 0.0; // <= 0 selects n / 4
    MmdMode mode = MmdMode::Exact;
    std::size_t samples = 1024; // model draws in Sampled mode

    [[nodiscard]] double resolved_bandwidth(std::size_t n) const {
        const double h = bandwidth > 0.0 ? bandwidth : static_cast<double>(n) / 4.0;
        if (!(h > 0.0)) {
            throw ConfigError("MMD bandwidth must be positive");
        }
        return h;
    }
};

/// Multiplies v (length 2^n) by the Hamming kernel matrix. The kernel is a
/// tensor product of per-bit 2x2 blocks [[1, e], [e, 1]], e = exp(-1/h).
inline RealVector hamming_kernel_apply(RealVector v, std::size_t n, double h) {
    require_same_size(v.size(), std::size_t{1} << n, "kernel input");
    const double e = std::exp(-1.0 / h);
    for (std::size_t q = 0; q < n; ++q) {
        const std::size_t stride = std::size_t{1} << q;
        for (std::size_t base = 0; base < v.size(); base += 2 * stride) {
            for (std::size_t i = base; i < base + stride; ++i) {
                const double x0 = v[i];
                const double x1 = v[i + stride];
                v[i] = x0 + e * x1;
                v[i + stride] = e * x0 + x1;
            }
        }
    }
    return v;
}

inline RealVector empirical_distribution(std::span<const BitVector> samples, std::size_t n) {
    if (samples.empty()) {
        throw Error("empirical distribution of an empty sample set");
    }
    if (n > 24) {
        throw CapacityError("empirical distribution: width too large for a dense histogram");
    }
    RealVector q(std::size_t{1} << n, 0.0);
    const double w = 1.0 / static_cast<double>(samples.size());
    for (const auto& b : samples) {
        require_same_size(b.size(), n, "sample width");
        q[bits_to_index(b)] += w;
    }
    return q;
}

/// Biased (V-statistic) squared MMD between two distributions over {0,1}^n.
/// When `grad_p` is given it receives dMMD/dp = 2 K (p - q).
inline double mmd_squared(std::span<const double> p, std::span<const double> q, std::size_t n, double h,
                          RealVector* grad_p = nullptr) {
    require_same_size(p.size(), q.size(), "MMD distributions");
    RealVector diff(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        diff[i] = p[i] - q[i];
    }
    const RealVector kd = hamming_kernel_apply(diff, n, h);
    double v = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        v += diff[i] * kd[i];
    }
    if (grad_p) {
        grad_p->resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            (*grad_p)[i] = 2.0 * kd[i];
        }
    }
    return std::max(v, 0.0);
}

/// MMD of a model distribution (full Born probabilities) against the data marginal.
inline double mmd_loss(std::span<const double> model_probs, const LabeledBitDataset& data, const MmdConfig& cfg,
                       RealVector* grad_p = nullptr) {
    if (data.size() == 0) {
        throw Error("mmd_loss: empty data");
    }
    const auto q = empirical_distribution(data.samples, data.n);
    return mmd_squared(model_probs, q, data.n, cfg.resolved_bandwidth(data.n), grad_p);
}

/// Sampled mode: MMD between a set of model draws and the data.
inline double mmd_loss(std::span<const BitVector> model_samples, const LabeledBitDataset& data,
                       const MmdConfig& cfg) {
    if (data.size() == 0) {
        throw Error("mmd_loss: empty data");
    }
    const auto p = empirical_distribution(model_samples, data.n);
    const auto q = empirical_distribution(data.samples, data.n);
    return mmd_squared(p, q, data.n, cfg.resolved_bandwidth(data.n));
}

// ============================================================== discriminative terms

namespace detail {

inline std::size_t count_present(const Matrix& class_means, std::span<const std::uint8_t> present) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < class_means.rows(); ++i) {
        c += present.empty() || present[i];
    }
    return c;
}

} // namespace detail

/// (1/K) sum_k Var_c[class mean of feature k] (population variance over classes).
/// `grad` (C x K) receives d/d class_means.
inline double disc_loss(const Matrix& class_means, Matrix* grad = nullptr) {
    const std::size_t C = class_means.rows();
    const std::size_t K = class_means.cols();
    if (C < 2) {
        throw Error("disc_loss: needs at least 2 classes");
    }
    if (grad) {
        *grad = Matrix(C, K);
    }
    if (K == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        double mu = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            mu += class_means(c, k);
        }
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double d = class_means(c, k) - mu;
            var += d * d;
            if (grad) {
                (*grad)(c, k) = 2.0 * d / (static_cast<double>(C) * static_cast<double>(K));
            }
        }
        total += var / static_cast<double>(C);
    }
    return total / static_cast<double>(K);
}

/// Sum over ordered pairs k != k' of |<sigma(tau l_k), sigma(tau l_k')>|.
/// With `normalize`, divided by the number of ordered pairs.
inline double diversity_penalty(const WordLogits& wl, Matrix* grad = nullptr, bool normalize = false) {
    const std::size_t K = wl.pool_size();
    const std::size_t n = wl.width();
    Matrix sig(K, n);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            sig(k, i) = sigmoid(wl.tau * wl.logits(k, i));
        }
    }
    RealVector col(n, 0.0), col_sq(n, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            col[i] += sig(k, i);
            col_sq[i] += sig(k, i) * sig(k, i);
        }
    }
    const double scale = (normalize && K > 1) ? 1.0 / (static_cast<double>(K) * static_cast<double>(K - 1)) : 1.0;
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        v += col[i] * col[i] - col_sq[i];
    }
    if (grad) {
        *grad = Matrix(K, n);
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const double s = sig(k, i);
                (*grad)(k, i) = scale * 2.0 * (col[i] - s) * wl.tau * s * (1.0 - s);
            }
        }
    }
    return scale * v;
}

/// sum_{k,i} sigma(tau l_{k,i}).
inline double sparsity_penalty(const WordLogits& wl, Matrix* grad = nullptr) {
    double v = 0.0;
    if (grad) {
        *grad = Matrix(wl.pool_size(), wl.width());
    }
    for (std::size_t k = 0; k < wl.pool_size(); ++k) {
        for (std::size_t i = 0; i < wl.width(); ++i) {
            const double s = sigmoid(wl.tau * wl.logits(k, i));
            v += s;
            if (grad) {
                (*grad)(k, i) = wl.tau * s * (1.0 - s);
            }
        }
    }
    return v;
}

/// -(1/|P|) sum over unordered class pairs of ||mu_c - mu_c'||^2 for the
/// classes present in `labels`. `grad` (N x K) receives d/d features.
inline double class_separation_penalty(const Matrix& features, std::span<const int> labels, int num_classes,
                                       Matrix* grad = nullptr) {
    require_same_size(features.rows(), labels.size(), "class separation features/labels");
    const auto C = static_cast<std::size_t>(num_classes);
    const std::size_t K = features.cols();
    std::vector<std::size_t> counts(C, 0);
    for (int y : labels) {
        ++counts[static_cast<std::size_t>(y)];
    }
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] > 0) {
            present.push_back(c);
        }
    }
    if (present.size() < 2) {
        throw Error("class_separation_penalty: needs at least 2 classes");
    }
    const Matrix mu = detail::class_means(features, labels, num_classes);
    const double pairs = static_cast<double>(present.size() * (present.size() - 1) / 2);
    double v = 0.0;
    Matrix dmu(C, K);
    for (std::size_t a = 0; a < present.size(); ++a) {
        for (std::size_t b = a + 1; b < present.size(); ++b) {
            const auto ca = present[a];
            const auto cb = present[b];
            for (std::size_t k = 0; k < K; ++k) {
                const double d = mu(ca, k) - mu(cb, k);
                v += d * d;
                dmu(ca, k) += -2.0 * d / pairs;
                dmu(cb, k) += 2.0 * d / pairs;
            }
        }
    }
    if (grad) {
        *grad = Matrix(features.rows(), K);
        for (std::size_t j = 0; j < features.rows(); ++j) {
            const auto c = static_cast<std::size_t>(labels[j]);
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t k = 0; k < K; ++k) {
                (*grad)(j, k) = dmu(c, k) * inv;
            }
        }
    }
    return -v / pairs;
}

/// Mean negative log-softmax of the true class (max-subtracted).
/// `grad` receives d/d logits (already divided by N).
inline double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad = nullptr) {
    require_same_size(logits.rows(), labels.size(), "cross_entropy logits/labels");
    const std::size_t N = logits.rows();
    const std::size_t C = logits.cols();
    if (grad) {
        *grad = Matrix(N, C);
    }
    if (N == 0) {
        return 0.0;
    }
    double total = 0.0;
    RealVector prob(C);
    for (std::size_t j = 0; j < N; ++j) {
        auto row = logits.row(j);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            prob[c] = std::exp(row[c] - mx);
            z += prob[c];
        }
        const auto y = static_cast<std::size_t>(labels[j]);
        total += -(row[y] - mx - std::log(z));
        if (grad) {
            for (std::size_t c = 0; c < C; ++c) {
                (*grad)(j, c) = (prob[c] / z - (c == y ? 1.0 : 0.0)) / static_cast<double>(N);
            }
        }
    }
    return total / static_cast<double>(N);
}

// ============================================================== schedule

enum class Interpolation { Linear, Geometric };

struct TemperatureSchedule {
    std::size_t phase1_epochs = 100;
    std::size_t phase2_epochs = 100;
    double tau_start = 1.0;
    double tau_end = 10.0;
    Interpolation interpolation = Interpolation::Geometric;

    [[nodiscard]] std::size_t total_epochs() const { return phase1_epochs + phase2_epochs; }

    void validate() const {
        if (!(tau_start > 0.0) || !(tau_end >= tau_start)) {
            throw ConfigError("temperature schedule needs 0 < tau_start <= tau_end");
        }
    }
};

struct ScheduleStep {
    double tau = 1.0;
    bool hard_forward = false;
};

inline ScheduleStep schedule_step(const TemperatureSchedule& s, std::size_t epoch) {
    s.validate();
    if (epoch >= s.phase1_epochs) {
        return {s.tau_end, true};
    }
    const double t = static_cast<double>(epoch) / static_cast<double>(s.phase1_epochs);
    const double tau = s.interpolation == Interpolation::Linear
                           ? s.tau_start + t * (s.tau_end - s.tau_start)
                           : s.tau_start * std::pow(s.tau_end / s.tau_start, t);
    return {tau, false};
}

// ============================================================== optimizer

/// Sgd is plain gradient descent (no momentum), with coupled L2 decay.
enum class OptimizerKind { Adam, AdamW, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::AdamW;
    double learning_rate = 0.01;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t horizon = 200; // cosine annealing length in steps; 0 disables annealing

    void validate() const {
        if (!(learning_rate > 0.0)) {
            throw ConfigError("optimizer: learning rate must be positive");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("optimizer: betas must lie in [0,1)");
        }
    }

    /// Half-cosine from the base rate at step 0 to 0 at the horizon.
    [[nodiscard]] double rate_at(std::size_t step) const {
        if (horizon == 0) {
            return learning_rate;
        }
        if (step >= horizon) {
            return 0.0;
        }
        return 0.5 * learning_rate *
               (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(horizon)));
    }
};

/// Adam/AdamW state keyed by parameter-block name.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    [[nodiscard]] const OptimizerConfig& config() const { return cfg_; }

    void step(std::string_view block, std::span<double> params, std::span<const double> grads, std::size_t step) {
        require_same_size(params.size(), grads.size(), "optimizer params/grads");
        for (double g : grads) {
            if (!std::isfinite(g)) {
                throw TrainingError("non-finite gradient in parameter block \"" + std::string(block) + "\"");
            }
        }
        const double lr_now = cfg_.rate_at(step);
        if (cfg_.kind == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= lr_now * (grads[i] + cfg_.weight_decay * params[i]);
            }
            return;
        }
        auto& st = state_[std::string(block)];
        if (st.m.size() != params.size()) {
            st.m.assign(params.size(), 0.0);
            st.v.assign(params.size(), 0.0);
        }
        ++st.t;
        const double lr = lr_now;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            double g = grads[i];
            if (cfg_.kind == OptimizerKind::Adam && cfg_.weight_decay != 0.0) {
                g += cfg_.weight_decay * params[i];
            }
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            if (cfg_.kind == OptimizerKind::AdamW && cfg_.weight_decay != 0.0) {
                params[i] -= lr * cfg_.weight_decay * params[i];
            }
            params[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }

private:
    struct BlockState {
        RealVector m, v;
        std::size_t t = 0;
    };
    OptimizerConfig cfg_;
    std::map<std::string, BlockState, std::less<>> state_;
};

} // namespace qparity
