#pragma once

// End-to-end procedures: native-binary word learning, the basis/moment swap
// harness, sPQC-Parity, and FGSM robustness with the rounding defense.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qparity/core.hpp"
#include "qparity/datasets.hpp"
#include "qparity/deploy.hpp"
#include "qparity/losses.hpp"
#include "qparity/models.hpp"
#include "qparity/parity.hpp"
#include "qparity/simulator.hpp"

namespace qparity {

inline const std::vector<std::uint64_t> kDefaultSeeds{42, 123, 456, 789, 1024};

/// Runs fn(seed) for every seed with at most `jobs` concurrent runs; results
/// keep seed order.
template <class Fn>
auto map_seeds(std::span<const std::uint64_t> seeds, std::size_t jobs, Fn&& fn) {
    using R = decltype(fn(std::uint64_t{}));
    std::vector<R> out;
    out.reserve(seeds.size());
    jobs = std::max<std::size_t>(jobs, 1);
    if (jobs == 1) {
        for (auto s : seeds) {
            out.push_back(fn(s));
        }
        return out;
    }
    for (std::size_t start = 0; start < seeds.size(); start += jobs) {
        std::vector<std::future<R>> batch;
        for (std::size_t i = start; i < std::min(seeds.size(), start + jobs); ++i) {
            batch.push_back(std::async(std::launch::async, [&fn, s = seeds[i]] { return fn(s); }));
        }
        for (auto& f : batch) {
            out.push_back(f.get());
        }
    }
    return out;
}

// ============================================================== word selection helpers

/// Drops empty words and duplicates, ranks by data-moment variance and keeps the top K.
inline std::vector<ParityWord> select_top_k(const LabeledBitDataset& train, std::span<const ParityWord> pool,
                                            std::size_t K) {
    std::set<ParityWord> seen;
    std::vector<ParityWord> unique;
    for (const auto& w : pool) {
        if (!w.empty_word() && seen.insert(w).second) {
            unique.push_back(w);
        }
    }
    if (unique.empty()) {
        return {};
    }
    auto ranked = variance_rank(train, unique);
    std::vector<ParityWord> out;
    for (std::size_t i = 0; i < std::min(K, ranked.size()); ++i) {
        out.push_back(ranked[i].word);
    }
    return out;
}

/// Up to `pool_size` distinct words of order 1..max_order drawn uniformly without replacement.
inline std::vector<ParityWord> restricted_pool(std::size_t n, std::size_t max_order, std::size_t pool_size,
                                               std::uint64_t seed) {
    auto all = enumerate_words(n, max_order);
    Rng rng = make_rng(seed, 0xd9001);
    shuffle(all, rng);
    all.resize(std::min(all.size(), pool_size));
    return all;
}

// ============================================================== native binary

enum class PoolInit { Random, TopKClassical };

struct NativeBinaryConfig {
    std::size_t K = 128;
    std::size_t K_pool = 256;
    std::size_t epochs = 200;
    std::size_t layers = 8;
    double learning_rate = 0.01;
    double dw = 5.0;
    double lambda = 1.0;
    double tau = 1.0;
    PoolInit init = PoolInit::Random;
    double classical_init_logit = 4.0;
    std::size_t classical_init_max_order = 3;
    bool normalize_diversity = true;
    MmdConfig mmd{};
    HeadTrainingConfig head{};
    double weight_decay = 0.0;

    void validate() const {
        if (K == 0 || K > K_pool) {
            throw ConfigError("native: need 0 < K <= K_pool");
        }
        if (!(learning_rate > 0.0)) {
            throw ConfigError("native: learning rate must be positive");
        }
        if (!(tau > 0.0)) {
            throw ConfigError("native: tau must be positive");
        }
    }
};

struct NativeBinaryModel {
    Ansatz ansatz{1, 0};
    RealVector theta;
    WordLogits logits;
    std::vector<ParityWord> words;
    LinearHead head;
    double final_mmd = 0.0;
    double final_disc = 0.0;
    bool failed = false; // thresholding left no usable word
    std::vector<std::string> warnings;

    [[nodiscard]] DeployedParityClassifier deployed() const { return {logits.width(), words, head, std::nullopt}; }
};

inline Matrix init_pool_logits(const LabeledBitDataset& train, const NativeBinaryConfig& cfg, Rng& rng) {
    Matrix l(cfg.K_pool, train.n);
    for (auto& v : l.data()) {
        v = normal(rng);
    }
    if (cfg.init == PoolInit::TopKClassical) {
        const auto words = enumerate_words(train.n, cfg.classical_init_max_order);
        const auto ranked = variance_rank(train, words);
        const double c = cfg.classical_init_logit;
        for (std::size_t k = 0; k < std::min(cfg.K_pool, ranked.size()); ++k) {
            for (std::size_t i = 0; i < train.n; ++i) {
                l(k, i) = ranked[k].word.bits[i] ? c : -c;
            }
        }
    }
    return l;
}

/// Soft features of the pool on the data, disc reward and its gradient w.r.t. the logits.
inline double native_disc_reward(const LabeledBitDataset& train, const WordLogits& wl, Matrix& grad) {
    const std::size_t K = wl.pool_size();
    const std::size_t n = wl.width();
    const auto C = static_cast<std::size_t>(train.num_classes);
    const auto counts = detail::class_counts(train);
    // per bit: factor a = cos(pi p) and d a / d logit
    Matrix a(K, n), da(K, n);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(wl.tau * wl.logits(k, i));
            a(k, i) = std::cos(kPi * p);
            da(k, i) = -kPi * std::sin(kPi * p) * wl.tau * p * (1.0 - p);
        }
    }
    Matrix means(C, K);
    Matrix dsum(C, K * n); // per-class sums of d feature / d logits
    std::vector<std::size_t> on;
    RealVector prefix(n + 1), suffix(n + 1);
    for (std::size_t j = 0; j < train.size(); ++j) {
        const auto c = static_cast<std::size_t>(train.labels[j]);
        on.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (train.samples[j][i]) {
                on.push_back(i);
            }
        }
        const std::size_t m = on.size();
        auto ds = dsum.row(c);
        for (std::size_t k = 0; k < K; ++k) {
            prefix[0] = 1.0;
            for (std::size_t t = 0; t < m; ++t) {
                prefix[t + 1] = prefix[t] * a(k, on[t]);
            }
            suffix[m] = 1.0;
            for (std::size_t t = m; t-- > 0;) {
                suffix[t] = suffix[t + 1] * a(k, on[t]);
            }
            means(c, k) += prefix[m];
            for (std::size_t t = 0; t < m; ++t) {
                ds[k * n + on[t]] += da(k, on[t]) * prefix[t] * suffix[t + 1];
            }
        }
    }
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] > 0) {
            present.push_back(c);
        }
    }
    Matrix pm(present.size(), K);
    for (std::size_t r = 0; r < present.size(); ++r) {
        for (std::size_t k = 0; k < K; ++k) {
            pm(r, k) = means(present[r], k) / static_cast<double>(counts[present[r]]);
        }
    }
    Matrix gm;
    const double reward = disc_loss(pm, &gm);
    grad = Matrix(K, n);
    for (std::size_t r = 0; r < present.size(); ++r) {
        const auto c = present[r];
        const double inv = 1.0 / static_cast<double>(counts[c]);
        auto ds = dsum.row(c);
        for (std::size_t k = 0; k < K; ++k) {
            const double w = gm(r, k) * inv;
            for (std::size_t i = 0; i < n; ++i) {
                grad(k, i) += w * ds[k * n + i];
            }
        }
    }
    return reward;
}

/// theta follows the shift-rule gradient of MMD(Born(U(theta)|0>), data marginal);
/// logits follow -lambda * disc + dw * diversity. After training the pool is
/// thresholded, ranked on data moments, and a head is fit on the top K words.
inline NativeBinaryModel train_native_binary(const LabeledBitDataset& train, const NativeBinaryConfig& cfg,
                                             std::uint64_t seed) {
    cfg.validate();
    train.validate();
    if (train.size() == 0) {
        throw ConfigError("native: empty training set");
    }
    const std::size_t n = train.n;
    Rng rng = make_rng(seed, 0x4e42);
    NativeBinaryModel m;
    m.ansatz = Ansatz(n, cfg.layers);
    m.theta.resize(m.ansatz.num_params());
    for (auto& t : m.theta) {
        t = (2.0 * uniform01(rng) - 1.0) * kPi;
    }
    m.logits.logits = init_pool_logits(train, cfg, rng);
    m.logits.tau = cfg.tau;

    const RealVector q = empirical_distribution(train.samples, n);
    const double h = cfg.mmd.resolved_bandwidth(n);
    const StateVector zero(n);
    OptimizerConfig oc{OptimizerKind::AdamW, cfg.learning_rate, cfg.weight_decay, 0.9, 0.999, 1e-8, cfg.epochs};
    Optimizer opt(oc);
    Matrix g_disc, g_div;
    RealVector g_p;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!m.theta.empty()) {
            const auto probs = born_probabilities(apply_ansatz(zero, m.ansatz, m.theta));
            m.final_mmd = mmd_squared(probs, q, n, h, &g_p);
            const auto g_theta = param_shift_grad_probs(zero, m.ansatz, m.theta, g_p);
            opt.step("theta", m.theta, g_theta, epoch);
        }
        // summed over pool rows: each row is rewarded by its own variance at unit weight
        const double pool = static_cast<double>(cfg.K_pool);
        m.final_disc = pool * native_disc_reward(train, m.logits, g_disc);
        for (double& g : g_disc.data()) {
            g *= pool;
        }
        const double div = diversity_penalty(m.logits, &g_div, cfg.normalize_diversity);
        const double loss = m.final_mmd - cfg.lambda * m.final_disc + cfg.dw * div;
        if (!std::isfinite(loss)) {
            throw TrainingError("native: non-finite loss at epoch " + std::to_string(epoch));
        }
        auto& gl = g_disc.data();
        for (std::size_t i = 0; i < gl.size(); ++i) {
            gl[i] = -cfg.lambda * gl[i] + cfg.dw * g_div.data()[i];
        }
        opt.step("logits", m.logits.logits.data(), gl, epoch);
    }
    if (cfg.epochs == 0 && !m.theta.empty()) {
        const auto probs = born_probabilities(apply_ansatz(zero, m.ansatz, m.theta));
        m.final_mmd = mmd_squared(probs, q, n, h);
    }

    m.words = select_top_k(train, threshold_words(m.logits), cfg.K);
    if (m.words.empty()) {
        m.failed = true;
        m.warnings.push_back("all pool words thresholded to the empty word");
        m.head = LinearHead(static_cast<std::size_t>(train.num_classes), 0);
        return m;
    }
    const Matrix feats = empirical_parity_features(train, m.words);
    m.head = train_linear_head(feats, train.labels, train.num_classes, cfg.head);
    return m;
}

// ============================================================== moments and swap

enum class Source { D, Q };

struct SwapCell {
    Source basis = Source::D;
    Source moments = Source::D;
};

inline std::string to_string(Source s) { return s == Source::D ? "D" : "Q"; }
inline std::string to_string(SwapCell c) { return to_string(c.basis) + "+" + to_string(c.moments); }

/// D: hard parities of the raw bits. Q: <Z^s> on U(theta)|b> per sample.
inline Matrix compute_moments(Source moments, std::span<const ParityWord> words, const LabeledBitDataset& ds,
                              const RealVector* theta = nullptr, const Ansatz* ansatz = nullptr) {
    if (moments == Source::D) {
        return empirical_parity_features(ds, words);
    }
    if (!theta || !ansatz) {
        throw ConfigError("Q moments need circuit parameters and an ansatz");
    }
    std::vector<DiagonalObservable> obs;
    for (const auto& w : words) {
        require_same_size(w.size(), ds.n, "word width");
        obs.push_back(DiagonalObservable::hard(w));
    }
    Matrix f(ds.size(), words.size());
    for (std::size_t j = 0; j < ds.size(); ++j) {
        StateVector s = basis_state(ds.samples[j]);
        apply_ansatz_inplace(s, *ansatz, *theta);
        const auto probs = born_probabilities(s);
        for (std::size_t k = 0; k < obs.size(); ++k) {
            f(j, k) = expect_diagonal(probs, obs[k]);
        }
    }
    return f;
}

inline Matrix compute_moments(SwapCell cell, std::span<const ParityWord> words, const LabeledBitDataset& ds,
                              const RealVector* theta = nullptr, const Ansatz* ansatz = nullptr) {
    return compute_moments(cell.moments, words, ds, theta, ansatz);
}

struct SwapConfig {
    NativeBinaryConfig native{};
    std::size_t restricted_max_order = 3;
    double test_fraction = 0.3;
};

/// acc[basis][moments], indices 0 = D, 1 = Q.
struct SwapSeedResult {
    std::uint64_t seed = 0;
    double acc[2][2]{};
    std::vector<ParityWord> d_words;
    std::vector<ParityWord> q_words;
};

struct SwapTable {
    std::vector<SwapSeedResult> per_seed;
    double mean[2][2]{};
    double stdev[2][2]{};
};

inline SwapSeedResult run_swap_seed(const LabeledBitDataset& ds, const SwapConfig& cfg, std::uint64_t seed) {
    const auto [train, test] = split(ds, cfg.test_fraction, seed);
    SwapSeedResult r;
    r.seed = seed;
    const auto native = train_native_binary(train, cfg.native, seed);
    r.q_words = native.words;
    r.d_words = select_top_k(train, restricted_pool(ds.n, cfg.restricted_max_order, cfg.native.K_pool, seed),
                             cfg.native.K);
    const std::vector<ParityWord>* bases[2] = {&r.d_words, &r.q_words};
    for (int b = 0; b < 2; ++b) {
        for (int mo = 0; mo < 2; ++mo) {
            const auto src = mo == 0 ? Source::D : Source::Q;
            if (bases[b]->empty()) {
                r.acc[b][mo] = 0.0;
                continue;
            }
            const Matrix ftr = compute_moments(src, *bases[b], train, &native.theta, &native.ansatz);
            const Matrix fte = compute_moments(src, *bases[b], test, &native.theta, &native.ansatz);
            const auto head = train_linear_head(ftr, train.labels, train.num_classes, cfg.native.head);
            r.acc[b][mo] = accuracy(head.predict_all(fte), test.labels);
        }
    }
    return r;
}

inline SwapTable run_swap(const LabeledBitDataset& ds, const SwapConfig& cfg, std::span<const std::uint64_t> seeds,
                          std::size_t jobs = 1) {
    SwapTable t;
    t.per_seed = map_seeds(seeds, jobs, [&](std::uint64_t s) { return run_swap_seed(ds, cfg, s); });
    for (int b = 0; b < 2; ++b) {
        for (int mo = 0; mo < 2; ++mo) {
            RealVector v;
            for (const auto& r : t.per_seed) {
                v.push_back(r.acc[b][mo]);
            }
            const auto s = summarize(v);
            t.mean[b][mo] = s.mean;
            t.stdev[b][mo] = s.std;
        }
    }
    return t;
}

// ============================================================== sPQC-Parity

struct SpqcConfig {
    std::size_t n_qubits = 14;
    std::size_t layers = 6;
    std::size_t K = 128;
    LossWeights weights{};
    TemperatureSchedule schedule{};
    OptimizerConfig optimizer{OptimizerKind::AdamW, 0.01, 0.0, 0.9, 0.999, 1e-8, 200};
    std::size_t batch_size = 64; // 0 = full batch
    bool normalize_diversity = true;
    double logit_init_scale = 1.0;
    double theta_init_scale = 0.1;
    bool post_selection = false; // accepted for provenance; no-op

    void validate() const {
        if (n_qubits == 0 || n_qubits > kMaxQubits) {
            throw CapacityError("spqc: n_qubits must be in 1.." + std::to_string(kMaxQubits));
        }
        if (K == 0) {
            throw ConfigError("spqc: K must be positive");
        }
        weights.validate();
        schedule.validate();
        optimizer.validate();
    }
};

struct SpqcModel {
    std::size_t n_qubits = 0;
    Ansatz ansatz{1, 0};
    RealVector theta;
    WordLogits logits;
    std::vector<ParityWord> words;
    LinearHead head;
    std::optional<PcaModel> reduction; // when the input is wider than 2^n_q
    std::size_t skipped_rows = 0;      // all-zero training rows
    std::vector<std::string> warnings;

    [[nodiscard]] std::optional<RealVector> prepare(std::span<const double> x) const {
        RealVector v = reduction ? apply_pca(*reduction, x) : RealVector(x.begin(), x.end());
        double nrm = 0.0;
        for (double a : v) {
            nrm += a * a;
        }
        if (!(nrm > 0.0)) {
            return std::nullopt;
        }
        return v;
    }

    /// Hard-word features on the encoded state; an all-zero input yields zeros.
    [[nodiscard]] RealVector features(std::span<const double> x) const {
        RealVector f(words.size(), 0.0);
        const auto v = prepare(x);
        if (!v) {
            return f;
        }
        const auto probs = born_probabilities(apply_ansatz(amplitude_encode(*v, n_qubits), ansatz, theta));
        for (std::size_t k = 0; k < words.size(); ++k) {
            f[k] = expect_diagonal(probs, DiagonalObservable::hard(words[k]));
        }
        return f;
    }

    [[nodiscard]] int predict(std::span<const double> x) const { return head.predict(features(x)); }

    [[nodiscard]] double evaluate(const ContinuousDataset& ds) const {
        std::vector<int> pred;
        for (std::size_t r = 0; r < ds.size(); ++r) {
            pred.push_back(predict(ds.samples.row(r)));
        }
        return accuracy(pred, ds.labels);
    }
};

inline ContinuousDataset to_real_dataset(const LabeledBitDataset& ds) {
    return {ds.n, bits_to_matrix(ds.samples, ds.n), ds.labels, ds.num_classes};
}

/// CE + alpha*div + beta*sparse + gamma*class separation on soft Z-string
/// expectations of U(theta)|psi(x)>. Phase 2 evaluates hard words in the forward
/// pass while gradients flow through the soft observables.
inline SpqcModel train_spqc(const ContinuousDataset& train, const SpqcConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    train.validate();
    if (train.num_classes < 2) {
        throw ConfigError("spqc: needs at least 2 classes");
    }
    const std::size_t nq = cfg.n_qubits;
    const std::size_t dim = std::size_t{1} << nq;
    const std::size_t K = cfg.K;
    const auto C = static_cast<std::size_t>(train.num_classes);
    Rng rng = make_rng(seed, 0x5bdc);

    SpqcModel m;
    m.n_qubits = nq;
    if (train.d > dim) {
        m.reduction = fit_pca(train.samples, dim);
        m.warnings.push_back("input reduced by PCA to " + std::to_string(dim) + " dimensions");
    }
    // encoded initial states, all-zero rows skipped
    std::vector<StateVector> psi;
    std::vector<int> labels;
    for (std::size_t r = 0; r < train.size(); ++r) {
        auto v = m.prepare(train.samples.row(r));
        if (!v) {
            ++m.skipped_rows;
            continue;
        }
        psi.push_back(amplitude_encode(*v, nq));
        labels.push_back(train.labels[r]);
    }
    if (m.skipped_rows > 0) {
        m.warnings.push_back(std::to_string(m.skipped_rows) + " all-zero rows skipped");
    }
    if (psi.empty()) {
        throw ConfigError("spqc: no encodable training rows");
    }
    m.ansatz = Ansatz(nq, cfg.layers);
    m.theta.resize(m.ansatz.num_params());
    for (auto& t : m.theta) {
        t = normal(rng, 0.0, cfg.theta_init_scale);
    }
    m.logits.logits = Matrix(K, nq);
    for (auto& v : m.logits.logits.data()) {
        v = normal(rng, 0.0, cfg.logit_init_scale);
    }
    m.head = LinearHead(C, K);

    const std::size_t N = psi.size();
    const std::size_t B = cfg.batch_size == 0 ? N : std::min(cfg.batch_size, N);
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Optimizer opt(cfg.optimizer);
    const std::size_t epochs = cfg.schedule.total_epochs();
    const auto& w = cfg.weights;

    Matrix feats(B, K), logits(B, C), dlogits, dsep, g_div, g_sparse;
    Matrix g_logits(K, nq);
    RealVector g_theta(m.theta.size()), g_w(C * K), g_b(C), g_th(m.theta.size());
    std::vector<RealVector> probs(B);
    std::vector<StateVector> phi(B, StateVector(nq));
    std::vector<int> batch_labels(B);
    RealVector dv(nq), combined(dim);
    std::size_t cursor = N;

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto st = schedule_step(cfg.schedule, epoch);
        m.logits.tau = st.tau;
        std::vector<DiagonalObservable> soft_obs, fwd_obs;
        for (std::size_t k = 0; k < K; ++k) {
            soft_obs.push_back(DiagonalObservable::soft(m.logits.logits.row(k), st.tau));
        }
        if (st.hard_forward) {
            for (const auto& word : threshold_words(m.logits)) {
                fwd_obs.push_back(DiagonalObservable::hard(word));
            }
        }
        const auto& forward_obs = st.hard_forward ? fwd_obs : soft_obs;
        // next minibatch
        std::vector<std::size_t> batch;
        for (std::size_t b = 0; b < B; ++b) {
            if (cursor == N) {
                shuffle(order, rng);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        for (std::size_t b = 0; b < B; ++b) {
            phi[b] = apply_ansatz(psi[batch[b]], m.ansatz, m.theta);
            probs[b] = born_probabilities(phi[b]);
            batch_labels[b] = labels[batch[b]];
            for (std::size_t k = 0; k < K; ++k) {
                feats(b, k) = expect_diagonal(probs[b], forward_obs[k]);
            }
            const auto l = m.head.logits(feats.row(b));
            std::copy(l.begin(), l.end(), logits.row(b).begin());
        }
        double loss = cross_entropy(logits, batch_labels, &dlogits);
        // class separation needs two classes in the batch
        std::set<int> in_batch(batch_labels.begin(), batch_labels.end());
        const bool sep = w.gamma != 0.0 && in_batch.size() >= 2;
        if (sep) {
            loss += w.gamma * class_separation_penalty(feats, batch_labels, train.num_classes, &dsep);
        }
        loss += w.alpha * diversity_penalty(m.logits, &g_div, cfg.normalize_diversity);
        loss += w.beta * sparsity_penalty(m.logits, &g_sparse);
        if (!std::isfinite(loss)) {
            throw TrainingError("spqc: non-finite loss at epoch " + std::to_string(epoch));
        }

        std::fill(g_logits.data().begin(), g_logits.data().end(), 0.0);
        std::fill(g_theta.begin(), g_theta.end(), 0.0);
        std::fill(g_w.begin(), g_w.end(), 0.0);
        std::fill(g_b.begin(), g_b.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            RealVector dfeat(K, 0.0);
            for (std::size_t c = 0; c < C; ++c) {
                const double g = dlogits(b, c);
                g_b[c] += g;
                for (std::size_t k = 0; k < K; ++k) {
                    g_w[c * K + k] += g * feats(b, k);
                    dfeat[k] += g * m.head.weights(c, k);
                }
            }
            if (sep) {
                for (std::size_t k = 0; k < K; ++k) {
                    dfeat[k] += w.gamma * dsep(b, k);
                }
            }
            // logits through the soft observables
            std::fill(combined.begin(), combined.end(), 0.0);
            for (std::size_t k = 0; k < K; ++k) {
                if (dfeat[k] == 0.0) {
                    continue;
                }
                expect_diagonal_grad(probs[b], soft_obs[k], dv);
                auto gl = g_logits.row(k);
                for (std::size_t i = 0; i < nq; ++i) {
                    const double p = sigmoid(st.tau * m.logits.logits(k, i));
                    gl[i] += dfeat[k] * dv[i] * (-kPi * std::sin(kPi * p)) * st.tau * p * (1.0 - p);
                }
                const auto diag = soft_obs[k].diagonal();
                for (std::size_t x = 0; x < dim; ++x) {
                    combined[x] += dfeat[k] * diag[x];
                }
            }
            if (!m.theta.empty()) {
                adjoint_expectation_grad(psi[batch[b]], m.ansatz, m.theta, combined, g_th);
                for (std::size_t i = 0; i < g_th.size(); ++i) {
                    g_theta[i] += g_th[i];
                }
            }
        }
        for (std::size_t i = 0; i < g_logits.data().size(); ++i) {
            g_logits.data()[i] += w.alpha * g_div.data()[i] + w.beta * g_sparse.data()[i];
        }
        opt.step("theta", m.theta, g_theta, epoch);
        opt.step("logits", m.logits.logits.data(), g_logits.data(), epoch);
        opt.step("head.weights", m.head.weights.data(), g_w, epoch);
        opt.step("head.bias", m.head.bias, g_b, epoch);
    }
    m.words = threshold_words(m.logits);
    return m;
}

// ============================================================== robustness

/// d loss / d x for input x with true label y.
using SurrogateGrad = std::function<RealVector(std::span<const double>, int)>;
using RealPredictor = std::function<int(std::span<const double>)>;

/// x + eps * sign(grad), sign(0) = 0.
inline RealVector fgsm_attack(const SurrogateGrad& grad, std::span<const double> x, int y, double eps) {
    if (!(eps >= 0.0)) {
        throw ConfigError("fgsm: epsilon must be non-negative");
    }
    RealVector out(x.begin(), x.end());
    if (eps == 0.0) {
        return out;
    }
    const auto g = grad(x, y);
    require_same_size(g.size(), x.size(), "fgsm gradient");
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += eps * sign0(g[i]);
    }
    return out;
}

/// Nearest multiple of step (half-way rounds up), optionally clamped to [lo, hi].
inline RealVector round_to_grid(std::span<const double> x, double step, std::optional<double> lo = std::nullopt,
                                std::optional<double> hi = std::nullopt) {
    if (!(step > 0.0)) {
        throw ConfigError("round_to_grid: step must be positive");
    }
    RealVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = std::floor(x[i] / step + 0.5) * step;
        if (lo) {
            r = std::max(r, *lo);
        }
        if (hi) {
            r = std::min(r, *hi);
        }
        out[i] = r;
    }
    return out;
}

/// Binary inputs: step 1 clamped to {0,1}.
inline RealVector round_binary(std::span<const double> x) { return round_to_grid(x, 1.0, 0.0, 1.0); }

/// Cross-entropy gradient w.r.t. the input of a linear model on raw inputs.
inline SurrogateGrad linear_surrogate(const LinearHead& head) {
    return [head](std::span<const double> x, int y) {
        auto l = head.logits(x);
        const double mx = *std::max_element(l.begin(), l.end());
        double z = 0.0;
        for (auto& v : l) {
            v = std::exp(v - mx);
            z += v;
        }
        RealVector g(x.size(), 0.0);
        for (std::size_t c = 0; c < l.size(); ++c) {
            const double d = l[c] / z - (static_cast<int>(c) == y ? 1.0 : 0.0);
            auto wr = head.weights.row(c);
            for (std::size_t i = 0; i < x.size(); ++i) {
                g[i] += d * wr[i];
            }
        }
        return g;
    };
}

/// Soft-parity surrogate prod cos(pi p_ki x_i) with p = sigmoid(l) at temperature 1.
/// Without trained logits, hard words map to logits +-2.
inline SurrogateGrad parity_surrogate(std::span<const ParityWord> words, const LinearHead& head,
                                      const WordLogits* trained = nullptr) {
    std::vector<RealVector> parts;
    for (std::size_t k = 0; k < words.size(); ++k) {
        RealVector row(words[k].size());
        for (std::size_t i = 0; i < row.size(); ++i) {
            row[i] = words[k].bits[i] ? 2.0 : -2.0;
        }
        if (trained) {
            auto tr = trained->logits.row(k);
            row.assign(tr.begin(), tr.end());
        }
        parts.push_back(participation(row, 1.0));
    }
    return [parts, head](std::span<const double> x, int y) {
        const std::size_t K = parts.size();
        RealVector f(K);
        std::vector<RealVector> dx(K, RealVector(x.size()));
        for (std::size_t k = 0; k < K; ++k) {
            f[k] = soft_parity_participation(parts[k], x, {}, dx[k]);
        }
        auto l = head.logits(f);
        const double mx = *std::max_element(l.begin(), l.end());
        double z = 0.0;
        for (auto& v : l) {
            v = std::exp(v - mx);
            z += v;
        }
        RealVector g(x.size(), 0.0);
        for (std::size_t c = 0; c < l.size(); ++c) {
            const double d = l[c] / z - (static_cast<int>(c) == y ? 1.0 : 0.0);
            for (std::size_t k = 0; k < K; ++k) {
                const double s = d * head.weights(c, k);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    g[i] += s * dx[k][i];
                }
            }
        }
        return g;
    };
}

enum class Defense { None, Round };

struct AttackConfig {
    RealVector epsilons{0.0, 0.1, 0.2, 0.3, 0.49};
    Defense defense = Defense::Round;
    double grid_step = 1.0;

    void validate() const {
        for (double e : epsilons) {
            if (!(e >= 0.0)) {
                throw ConfigError("attack: epsilons must be non-negative");
            }
        }
        if (!(grid_step > 0.0)) {
            throw ConfigError("attack: grid step must be positive");
        }
    }
};

struct RobustnessPoint {
    double epsilon = 0.0;
    double defended_acc = 0.0;
    double undefended_acc = 0.0;
};

/// For each epsilon: attack every sample, evaluate with and without rounding.
/// Binary datasets round with step 1 clamped to {0,1}.
inline std::vector<RobustnessPoint> robustness_curve(const RealPredictor& predict, const SurrogateGrad& surrogate,
                                                     const LabeledBitDataset& test, const AttackConfig& atk) {
    atk.validate();
    std::vector<RobustnessPoint> out;
    for (double eps : atk.epsilons) {
        std::size_t hit_def = 0, hit_undef = 0;
        for (std::size_t j = 0; j < test.size(); ++j) {
            const RealVector x(test.samples[j].begin(), test.samples[j].end());
            const auto adv = fgsm_attack(surrogate, x, test.labels[j], eps);
            const auto snapped = atk.grid_step == 1.0 ? round_binary(adv) : round_to_grid(adv, atk.grid_step);
            hit_def += predict(atk.defense == Defense::Round ? snapped : adv) == test.labels[j];
            hit_undef += predict(adv) == test.labels[j];
        }
        const double N = static_cast<double>(std::max<std::size_t>(test.size(), 1));
        out.push_back({eps, static_cast<double>(hit_def) / N, static_cast<double>(hit_undef) / N});
    }
    return out;
}

struct RobustnessRow {
    double epsilon = 0.0;
    double defended_acc = 0.0;
    double undefended_acc = 0.0;
    double std_defended = 0.0;
    double std_undefended = 0.0;
};

/// Mean and population std across per-seed curves sharing one epsilon grid.
inline std::vector<RobustnessRow> aggregate_curves(const std::vector<std::vector<RobustnessPoint>>& curves) {
    std::vector<RobustnessRow> out;
    if (curves.empty()) {
        return out;
    }
    for (std::size_t e = 0; e < curves.front().size(); ++e) {
        RealVector d, u;
        for (const auto& c : curves) {
            require_same_size(c.size(), curves.front().size(), "robustness curve length");
            d.push_back(c[e].defended_acc);
            u.push_back(c[e].undefended_acc);
        }
        const auto sd = summarize(d);
        const auto su = summarize(u);
        out.push_back({curves.front()[e].epsilon, sd.mean, su.mean, sd.std, su.std});
    }
    return out;
}

inline void write_robustness_csv(std::ostream& out, std::span<const RobustnessRow> rows) {
    out << "epsilon,defended_acc,undefended_acc,std_defended,std_undefended\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%g,%.6f,%.6f,%.6f,%.6f\n", r.epsilon, r.defended_acc, r.undefended_acc,
                      r.std_defended, r.std_undefended);
        out << buf;
    }
}

// ============================================================== results

struct ExperimentResult {
    std::string pipeline;
    std::string dataset;
    std::vector<std::uint64_t> seeds;
    RealVector accuracies; // per seed, fraction in [0,1]
    Summary summary;
    std::vector<std::pair<std::string, std::string>> config; // resolved key/value echo
    std::vector<std::vector<std::string>> words;             // per seed
    std::vector<Matrix> head_weights;                        // per seed
    std::vector<RealVector> head_bias;                       // per seed
    std::vector<std::string> notes;
    std::vector<std::string> warnings;

    void finalize() { summary = summarize(accuracies); }

    [[nodiscard]] bool aggregates_consistent(double tol = 1e-9) const {
        const auto s = summarize(accuracies);
        return std::abs(s.mean - summary.mean) <= tol && std::abs(s.std - summary.std) <= tol &&
               std::abs(s.best - summary.best) <= tol;
    }
};

} // namespace qparity
