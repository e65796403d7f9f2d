#pragma once

// Trainers for linear heads and classical baselines, and the learned
// projection encoder for continuous inputs.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "qparity/core.hpp"
#include "qparity/datasets.hpp"
#include "qparity/deploy.hpp"
#include "qparity/losses.hpp"
#include "qparity/parity.hpp"

namespace qparity {

/// Full-batch plain gradient descent by default. Adam's per-coordinate scaling
/// inflates weakly correlated columns to the size of the informative ones.
struct HeadTrainingConfig {
    OptimizerConfig optimizer{OptimizerKind::Sgd, 0.1, 0.0, 0.9, 0.999, 1e-8, 0};
    std::size_t epochs = 1000;
    double l2 = 0.0;
    double l1 = 1e-3; // proximal soft-threshold on the weights after every step
};

inline Matrix bits_to_matrix(const std::vector<BitVector>& samples, std::size_t n) {
    Matrix m(samples.size(), n);
    for (std::size_t j = 0; j < samples.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            m(j, i) = samples[j][i];
        }
    }
    return m;
}

/// Multinomial logistic regression, full batch, zero-initialized; the optimizer
/// comes from the config and an optional L1 step is applied after each update.
inline LinearHead train_linear_head(const Matrix& features, std::span<const int> labels, int num_classes,
                                    const HeadTrainingConfig& cfg) {
    require_same_size(features.rows(), labels.size(), "head features/labels");
    for (double v : features.data()) {
        if (!std::isfinite(v)) {
            throw TrainingError("train_linear_head: non-finite feature");
        }
    }
    const auto C = static_cast<std::size_t>(num_classes);
    const std::size_t K = features.cols();
    const std::size_t N = features.rows();
    LinearHead head(C, K);
    Optimizer opt(cfg.optimizer);
    Matrix logits(N, C), dlogits;
    RealVector gw(C * K), gb(C);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t j = 0; j < N; ++j) {
            auto l = head.logits(features.row(j));
            std::copy(l.begin(), l.end(), logits.row(j).begin());
        }
        const double loss = cross_entropy(logits, labels, &dlogits);
        if (!std::isfinite(loss)) {
            throw TrainingError("train_linear_head: non-finite loss at epoch " + std::to_string(epoch));
        }
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t j = 0; j < N; ++j) {
            auto f = features.row(j);
            for (std::size_t c = 0; c < C; ++c) {
                const double g = dlogits(j, c);
                gb[c] += g;
                for (std::size_t k = 0; k < K; ++k) {
                    gw[c * K + k] += g * f[k];
                }
            }
        }
        for (std::size_t i = 0; i < gw.size(); ++i) {
            gw[i] += cfg.l2 * head.weights.data()[i];
        }
        opt.step("head.weights", head.weights.data(), gw, epoch);
        opt.step("head.bias", head.bias, gb, epoch);
        if (cfg.l1 > 0.0) {
            const double t = cfg.optimizer.rate_at(epoch) * cfg.l1;
            for (double& w : head.weights.data()) {
                w = w > t ? w - t : (w < -t ? w + t : 0.0);
            }
        }
    }
    return head;
}

inline LinearHead train_logistic_baseline(const Matrix& features, std::span<const int> labels, int num_classes,
                                          const HeadTrainingConfig& cfg = {}) {
    return train_linear_head(features, labels, num_classes, cfg);
}

struct SvmConfig {
    double lambda = 1e-3;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
};

/// Linear SVM: hinge + L2 by seeded Pegasos-style subgradient descent,
/// one-vs-rest for more than two classes.
inline LinearHead train_linear_svm_baseline(const Matrix& features, std::span<const int> labels, int num_classes,
                                            const SvmConfig& cfg = {}) {
    require_same_size(features.rows(), labels.size(), "svm features/labels");
    const std::size_t K = features.cols();
    const std::size_t N = features.rows();
    const auto C = static_cast<std::size_t>(num_classes);
    LinearHead head(C, K);
    auto fit_one = [&](auto positive, std::span<double> w, double& b, std::uint64_t stream) {
        Rng rng = make_rng(cfg.seed, stream);
        std::vector<std::size_t> order(N);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::size_t t = 0;
        for (std::size_t e = 0; e < cfg.epochs; ++e) {
            shuffle(order, rng);
            for (auto j : order) {
                ++t;
                const double eta = 1.0 / (cfg.lambda * static_cast<double>(t + 10));
                const double y = positive(labels[j]) ? 1.0 : -1.0;
                auto x = features.row(j);
                double margin = b;
                for (std::size_t k = 0; k < K; ++k) {
                    margin += w[k] * x[k];
                }
                margin *= y;
                for (std::size_t k = 0; k < K; ++k) {
                    w[k] *= 1.0 - eta * cfg.lambda;
                }
                if (margin < 1.0) {
                    for (std::size_t k = 0; k < K; ++k) {
                        w[k] += eta * y * x[k];
                    }
                    b += eta * y * 0.1;
                }
            }
        }
    };
    if (C == 2) {
        fit_one([](int y) { return y == 1; }, head.weights.row(1), head.bias[1], 1);
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            fit_one([c](int y) { return static_cast<std::size_t>(y) == c; }, head.weights.row(c), head.bias[c],
                    c + 1);
        }
    }
    return head;
}

// ============================================================== projection encoder

/// z = P x + offset, then an M-bit thermometer code per output: bit m is set
/// when z > cut_m, cuts centered on 0 with unit spacing (a single cut at 0
/// for M = 1). Soft mode replaces each step with sigmoid((z - cut)/T).
struct ProjectionEncoder {
    Matrix projection; // p x d
    RealVector offset; // p
    std::size_t bits_per_output = 1;
    double temperature = 1.0;

    [[nodiscard]] std::size_t outputs() const { return projection.rows(); }
    [[nodiscard]] std::size_t input_dim() const { return projection.cols(); }
    [[nodiscard]] std::size_t width() const { return outputs() * bits_per_output; }

    [[nodiscard]] double cut(std::size_t m) const {
        return static_cast<double>(m) - 0.5 * static_cast<double>(bits_per_output - 1);
    }

    [[nodiscard]] RealVector project(std::span<const double> x) const {
        require_same_size(x.size(), input_dim(), "projection input");
        RealVector z(offset);
        for (std::size_t j = 0; j < outputs(); ++j) {
            auto row = projection.row(j);
            for (std::size_t i = 0; i < x.size(); ++i) {
                z[j] += row[i] * x[i];
            }
        }
        return z;
    }

    [[nodiscard]] BitVector encode_hard(std::span<const double> x) const {
        const auto z = project(x);
        BitVector out(width());
        for (std::size_t j = 0; j < outputs(); ++j) {
            for (std::size_t m = 0; m < bits_per_output; ++m) {
                out[j * bits_per_output + m] = z[j] > cut(m);
            }
        }
        return out;
    }

    /// Soft bits at an extra sharpness factor `tau` (effective temperature T / tau).
    [[nodiscard]] RealVector encode_soft(std::span<const double> x, double tau = 1.0) const {
        const auto z = project(x);
        RealVector out(width());
        for (std::size_t j = 0; j < outputs(); ++j) {
            for (std::size_t m = 0; m < bits_per_output; ++m) {
                out[j * bits_per_output + m] = sigmoid(tau * (z[j] - cut(m)) / temperature);
            }
        }
        return out;
    }

    [[nodiscard]] LabeledBitDataset encode(const ContinuousDataset& ds) const {
        LabeledBitDataset out{width(), {}, ds.labels, ds.num_classes};
        for (std::size_t r = 0; r < ds.size(); ++r) {
            out.samples.push_back(encode_hard(ds.samples.row(r)));
        }
        return out;
    }
};

enum class EncodeMode { Soft, Hard };

/// Returns soft bits (Soft) or hard bits as 0/1 reals (Hard).
inline RealVector encode(const ProjectionEncoder& enc, std::span<const double> x, EncodeMode mode) {
    if (mode == EncodeMode::Soft) {
        return enc.encode_soft(x);
    }
    const auto b = enc.encode_hard(x);
    return RealVector(b.begin(), b.end());
}

struct ProjectionConfig {
    std::size_t outputs = 14;       // p
    std::size_t bits_per_output = 1; // M
    std::size_t words = 32;          // K
    double temperature = 1.0;
    TemperatureSchedule schedule{100, 100, 1.0, 10.0, Interpolation::Geometric};
    OptimizerConfig optimizer{OptimizerKind::Adam, 0.02, 0.0, 0.9, 0.999, 1e-8, 200};
    double l2 = 1e-4;
    double logit_init_scale = 1.0;
    bool post_selection = false; // accepted for provenance; no-op
};

struct ProjectionModel {
    ProjectionEncoder encoder;
    std::vector<ParityWord> words;
    WordLogits logits;
    LinearHead head;
    double final_train_accuracy = 0.0; // straight-through forward on the last epoch

    [[nodiscard]] DeployedParityClassifier deployed() const {
        return {encoder.width(), words, head, std::nullopt};
    }

    [[nodiscard]] int predict(std::span<const double> x) const {
        return deployed().predict(encoder.encode_hard(x));
    }

    [[nodiscard]] double evaluate(const ContinuousDataset& ds) const {
        const auto clf = deployed();
        std::vector<int> pred;
        for (std::size_t r = 0; r < ds.size(); ++r) {
            pred.push_back(clf.predict(encoder.encode_hard(ds.samples.row(r))));
        }
        return accuracy(pred, ds.labels);
    }
};

/// Jointly trains projection, word logits and linear head by cross-entropy on
/// soft parity features of soft-encoded bits. Phase 2 of the schedule runs a
/// hard forward pass (thresholded words on hard bits) with soft gradients.
inline ProjectionModel train_projection_pipeline(const ContinuousDataset& train, const ProjectionConfig& cfg,
                                                 std::uint64_t seed) {
    train.validate();
    if (train.num_classes < 2) {
        throw ConfigError("projection pipeline needs at least 2 classes");
    }
    if (cfg.bits_per_output < 1 || cfg.outputs < 1 || cfg.words < 1) {
        throw ConfigError("projection pipeline: outputs, bits and words must be positive");
    }
    cfg.schedule.validate();
    const std::size_t d = train.d;
    const std::size_t p = std::min(cfg.outputs, d);
    const std::size_t M = cfg.bits_per_output;
    const std::size_t n = p * M;
    const std::size_t K = cfg.words;
    const auto C = static_cast<std::size_t>(train.num_classes);
    const std::size_t N = train.size();
    Rng rng = make_rng(seed, 0x9707);

    ProjectionModel model;
    auto& enc = model.encoder;
    enc.bits_per_output = M;
    enc.temperature = cfg.temperature;
    // PCA-whitened initialization so projected outputs start at unit scale.
    const PcaModel pca = fit_pca(train.samples, p);
    enc.projection = Matrix(p, d);
    enc.offset.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        const double s = 1.0 / std::sqrt(std::max(pca.explained_variance[j], 1e-12));
        for (std::size_t i = 0; i < d; ++i) {
            enc.projection(j, i) = pca.components(j, i) * s;
            enc.offset[j] -= enc.projection(j, i) * pca.mean[i];
        }
    }
    model.logits.logits = Matrix(K, n);
    for (auto& v : model.logits.logits.data()) {
        v = normal(rng, 0.0, cfg.logit_init_scale);
    }
    model.head = LinearHead(C, K);

    Optimizer opt(cfg.optimizer);
    const std::size_t epochs = cfg.schedule.total_epochs();
    Matrix feats(N, K), logits(N, C), dlogits;
    Matrix g_proj(p, d), g_logits(K, n);
    RealVector g_off(p), g_w(C * K), g_b(C);
    RealVector soft_bits(n), hard_bits(n), part(n), dpart(n), dx(n), dz(p);
    std::vector<RealVector> sample_soft(N);
    std::vector<BitVector> sample_fwd(N);
    std::vector<RealVector> sample_z(N);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto st = schedule_step(cfg.schedule, epoch);
        model.logits.tau = st.tau;
        std::vector<ParityWord> hard_words;
        if (st.hard_forward) {
            hard_words = threshold_words(model.logits);
        }
        std::vector<RealVector> parts(K);
        for (std::size_t k = 0; k < K; ++k) {
            parts[k] = participation(model.logits.logits.row(k), st.tau);
        }
        // forward
        for (std::size_t j = 0; j < N; ++j) {
            sample_z[j] = enc.project(train.samples.row(j));
            sample_soft[j] = enc.encode_soft(train.samples.row(j), st.tau);
            if (st.hard_forward) {
                sample_fwd[j] = enc.encode_hard(train.samples.row(j));
            }
            for (std::size_t k = 0; k < K; ++k) {
                if (st.hard_forward) {
                    feats(j, k) = hard_parity(hard_words[k], sample_fwd[j]);
                } else {
                    feats(j, k) = soft_parity_participation(parts[k], sample_soft[j]);
                }
            }
            const auto l = model.head.logits(feats.row(j));
            std::copy(l.begin(), l.end(), logits.row(j).begin());
        }
        const double loss = cross_entropy(logits, train.labels, &dlogits);
        if (!std::isfinite(loss)) {
            throw TrainingError("projection pipeline: non-finite loss at epoch " + std::to_string(epoch));
        }
        // backward
        std::fill(g_proj.data().begin(), g_proj.data().end(), 0.0);
        std::fill(g_logits.data().begin(), g_logits.data().end(), 0.0);
        std::fill(g_off.begin(), g_off.end(), 0.0);
        std::fill(g_w.begin(), g_w.end(), 0.0);
        std::fill(g_b.begin(), g_b.end(), 0.0);
        for (std::size_t j = 0; j < N; ++j) {
            RealVector dfeat(K, 0.0);
            for (std::size_t c = 0; c < C; ++c) {
                const double g = dlogits(j, c);
                g_b[c] += g;
                for (std::size_t k = 0; k < K; ++k) {
                    g_w[c * K + k] += g * feats(j, k);
                    dfeat[k] += g * model.head.weights(c, k);
                }
            }
            std::fill(dx.begin(), dx.end(), 0.0);
            for (std::size_t k = 0; k < K; ++k) {
                if (dfeat[k] == 0.0) {
                    continue;
                }
                RealVector dxk(n);
                soft_parity_participation(parts[k], sample_soft[j], dpart, dxk);
                auto gl = g_logits.row(k);
                for (std::size_t i = 0; i < n; ++i) {
                    gl[i] += dfeat[k] * dpart[i] * st.tau * parts[k][i] * (1.0 - parts[k][i]);
                    dx[i] += dfeat[k] * dxk[i];
                }
            }
            std::fill(dz.begin(), dz.end(), 0.0);
            for (std::size_t o = 0; o < p; ++o) {
                for (std::size_t m = 0; m < M; ++m) {
                    const double u = sample_soft[j][o * M + m];
                    dz[o] += dx[o * M + m] * u * (1.0 - u) * st.tau / enc.temperature;
                }
            }
            auto x = train.samples.row(j);
            for (std::size_t o = 0; o < p; ++o) {
                g_off[o] += dz[o];
                auto gp = g_proj.row(o);
                for (std::size_t i = 0; i < d; ++i) {
                    gp[i] += dz[o] * x[i];
                }
            }
        }
        for (std::size_t i = 0; i < g_w.size(); ++i) {
            g_w[i] += cfg.l2 * model.head.weights.data()[i];
        }
        if (epoch + 1 == epochs) {
            model.final_train_accuracy = accuracy(LinearHead::readout_all(logits), train.labels);
        }
        opt.step("projection", enc.projection.data(), g_proj.data(), epoch);
        opt.step("offset", enc.offset, g_off, epoch);
        opt.step("logits", model.logits.logits.data(), g_logits.data(), epoch);
        opt.step("head.weights", model.head.weights.data(), g_w, epoch);
        opt.step("head.bias", model.head.bias, g_b, epoch);
    }
    model.words = threshold_words(model.logits);
    if (epochs == 0) {
        model.final_train_accuracy = model.evaluate(train);
    }
    return model;
}

} // namespace qparity
